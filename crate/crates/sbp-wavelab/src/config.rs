//! Run settings with defaults that can be overridden from a `key=value` file.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys and
//! malformed values are errors so that a typo cannot silently fall back to a
//! default.

use std::path::Path;

use anyhow::{bail, Context, Result};

/// Every tunable parameter of the experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    /// Seed of all random data.
    pub seed: u64,
    /// Random triples per operator certificate.
    pub certify_trials: usize,
    /// Grid points of the one-dimensional stability probes.
    pub cfl_1d_points: usize,
    /// Final time of the one-dimensional stability probes.
    pub cfl_1d_time: f64,
    /// Coarse points per row of the two-dimensional stability probes.
    pub cfl_2d_n: usize,
    /// Final time of the two-dimensional stability probes.
    pub cfl_2d_time: f64,
    /// Width of the final bracket of every threshold search.
    pub cfl_resolution: f64,
    /// Relative margin of the interface penalty above its lower bound.
    pub tau_margin: f64,
    /// Refinement levels of a convergence table.
    pub levels: usize,
    /// Coarse points per row of the long-time run.
    pub longtime_n: usize,
    /// Final time of the long-time run.
    pub longtime_time: f64,
    /// Time step ratio dt / h of the long-time run.
    pub longtime_ratio: f64,
    /// Coarse points per row of the conditioning study.
    pub cond_sizes: Vec<usize>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 42,
            certify_trials: 100,
            cfl_1d_points: 201,
            cfl_1d_time: 200.0,
            cfl_2d_n: 160,
            cfl_2d_time: 100.0,
            cfl_resolution: 0.01,
            tau_margin: 0.2,
            levels: 4,
            longtime_n: 160,
            longtime_time: 250.0,
            longtime_ratio: 2.09,
            cond_sizes: vec![320, 640],
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("invalid value {value:?} for {key}: {e}"))
}

impl Settings {
    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "certify_trials" => self.certify_trials = parse(key, value)?,
            "cfl_1d_points" => self.cfl_1d_points = parse(key, value)?,
            "cfl_1d_time" => self.cfl_1d_time = parse(key, value)?,
            "cfl_2d_n" => self.cfl_2d_n = parse(key, value)?,
            "cfl_2d_time" => self.cfl_2d_time = parse(key, value)?,
            "cfl_resolution" => self.cfl_resolution = parse(key, value)?,
            "tau_margin" => self.tau_margin = parse(key, value)?,
            "levels" => self.levels = parse(key, value)?,
            "longtime_n" => self.longtime_n = parse(key, value)?,
            "longtime_time" => self.longtime_time = parse(key, value)?,
            "longtime_ratio" => self.longtime_ratio = parse(key, value)?,
            "cond_sizes" => {
                self.cond_sizes = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            _ => bail!("unknown configuration key {key:?}"),
        }
        Ok(())
    }

    /// Applies every override in a `key=value` text.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key=value, got {line:?}", no + 1))?;
            self.set(k.trim(), v.trim()).with_context(|| format!("line {}", no + 1))?;
        }
        Ok(())
    }

    /// Defaults overridden by the file at `path`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut s = Self::default();
        s.apply_text(&text)?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_comments() {
        let mut s = Settings::default();
        s.apply_text("# comment\n\nseed = 7\ncond_sizes=40, 80\ncfl_2d_time=12.5\n").unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.cond_sizes, vec![40, 80]);
        assert_eq!(s.cfl_2d_time, 12.5);
        assert_eq!(s.levels, 4);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut s = Settings::default();
        assert!(s.apply_text("sed=3").is_err());
        assert!(s.apply_text("seed=three").is_err());
        assert!(s.apply_text("seed").is_err());
    }
}
