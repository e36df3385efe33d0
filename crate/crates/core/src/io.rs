//! Shared text-output helpers.

use std::path::Path;

use crate::error::Result;

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt17(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn join17(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(fmt17).collect::<Vec<_>>().join(",")
}

/// Writes `text` to `path` through a temporary sibling, so readers never see
/// half-written files.
pub fn write_atomic(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp~");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 19.0252, 0.0, 1e300] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(join17([1.0, 0.0]), "1.0000000000000000e0,0");
    }
}
