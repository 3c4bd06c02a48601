//! Deterministic serialization: numbers with 17 significant digits,
//! matrices row-major with explicit dimensions and site maps.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::symplectic::Region;

/// A float serialized as `{:.16e}`; non-finite values become `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(fmt_num(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn nums(v: &[f64]) -> Vec<Num> {
    v.iter().copied().map(Num).collect()
}

pub fn opt_nums(v: &[Option<f64>]) -> Vec<Option<Num>> {
    v.iter().map(|x| x.map(Num)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixOut {
    pub rows: usize,
    pub cols: usize,
    /// `"sites"` for r×r kernels, `"phi_then_pi"` for 2r×2r phase-space blocks.
    pub layout: &'static str,
    /// Lattice site of each row (and column) index.
    pub sites: Vec<usize>,
    pub data: Vec<Num>,
}

impl MatrixOut {
    pub fn sites(m: &DMatrix<f64>, region: &Region) -> Self {
        Self::build(m, "sites", region.sites().to_vec())
    }

    pub fn phase(m: &DMatrix<f64>, region: &Region) -> Self {
        let sites = region.sites().iter().chain(region.sites()).copied().collect();
        Self::build(m, "phi_then_pi", sites)
    }

    fn build(m: &DMatrix<f64>, layout: &'static str, sites: Vec<usize>) -> Self {
        let data = (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| Num(m[(r, c)]))).collect();
        MatrixOut { rows: m.nrows(), cols: m.ncols(), layout, sites, data }
    }
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(serde_json::to_string(&Num(0.1)).unwrap(), "1.0000000000000001e-1");
        assert_eq!(serde_json::to_string(&Num(f64::NAN)).unwrap(), "null");
        assert_eq!(serde_json::to_string(&Num(-2.0)).unwrap(), "-2.0000000000000000e0");
        let back: f64 = serde_json::from_str(&serde_json::to_string(&Num(std::f64::consts::PI)).unwrap()).unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }

    #[test]
    fn matrix_row_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let r = Region::new(vec![3, 5], 8).unwrap();
        let out = MatrixOut::sites(&m, &r);
        assert_eq!(out.data, vec![Num(1.0), Num(2.0), Num(3.0), Num(4.0)]);
        assert_eq!(out.sites, vec![3, 5]);
        assert_eq!(MatrixOut::phase(&DMatrix::zeros(4, 4), &r).sites, vec![3, 5, 3, 5]);
    }
}
