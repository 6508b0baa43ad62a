//! Single-axis sweeps: `--param <key> --values a,b,c` or `key=start:stop:step`.

use crate::error::CliError;
use crate::scenario::resolve_key;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub key: &'static str,
    /// Values as they will be written into the scenario.
    pub values: Vec<String>,
}

impl SweepSpec {
    pub fn from_list(key: &str, values: &str) -> Result<Self, CliError> {
        let key = resolve_key(key)?;
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err(CliError::Sweep(format!("no values given for `{key}`")));
        }
        Ok(SweepSpec { key, values })
    }

    /// `key=start:stop:step` (inclusive of `stop` when it lands on the
    /// lattice) or `key=a,b,c`.
    pub fn parse(expr: &str) -> Result<Self, CliError> {
        let (key, rhs) = expr
            .split_once('=')
            .ok_or_else(|| CliError::Sweep(format!("`{expr}`: expected key=start:stop:step")))?;
        let key = key.trim();
        let rhs = rhs.trim();
        if !rhs.contains(':') {
            return Self::from_list(key, rhs);
        }
        let parts: Vec<&str> = rhs.split(':').collect();
        let [start, stop, step] = parts.as_slice() else {
            return Err(CliError::Sweep(format!("`{rhs}`: expected start:stop:step")));
        };
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Sweep(format!("`{s}`: {e}")))
        };
        let values = range_values(num(start)?, num(stop)?, num(step)?)?;
        Ok(SweepSpec {
            key: resolve_key(key)?,
            values: values.into_iter().map(|v| format!("{v:?}")).collect(),
        })
    }
}

fn range_values(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step == 0.0 {
        return Err(CliError::Sweep("range bounds and step must be finite, step nonzero".into()));
    }
    let span = (stop - start) / step;
    if span < -1e-9 {
        return Err(CliError::Sweep("step does not move from start towards stop".into()));
    }
    let count = (span + 1e-9).floor() as usize + 1;
    if count > 1_000_000 {
        return Err(CliError::Sweep(format!("{count} sweep points is too many")));
    }
    Ok((0..count)
        .map(|i| {
            let v = start + i as f64 * step;
            if i + 1 == count && (v - stop).abs() <= 1e-9 * step.abs() {
                stop
            } else {
                v
            }
        })
        .collect())
}
