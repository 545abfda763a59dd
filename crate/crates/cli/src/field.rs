//! Plain-text density fields.
//!
//! ```text
//! gravtop-field 1
//! dim 2
//! nel 100 50 1
//! lengths 2.0 1.0 0.0
//! iteration 250
//! values
//! 0.25
//! ...
//! ```
//!
//! One value per element, x index fastest, then y, then z. Values are printed
//! in Rust's shortest round-trip form, so reading a file gives back the exact
//! bits that were written.

use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

const MAGIC: &str = "gravtop-field 1";

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub dim: usize,
    pub nel: [usize; 3],
    pub lengths: [f64; 3],
    pub iteration: usize,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn from_mesh(mesh: &gravtop_core::Mesh, iteration: usize, values: &[f64]) -> Self {
        Self { dim: mesh.dim(), nel: mesh.nel(), lengths: mesh.lengths(), iteration, values: values.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.nel.iter().product()
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.nel[0] * (j + self.nel[1] * k)]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 20 + 128);
        let [nx, ny, nz] = self.nel;
        let [lx, ly, lz] = self.lengths;
        writeln!(s, "{MAGIC}\ndim {}\nnel {nx} {ny} {nz}\nlengths {lx:?} {ly:?} {lz:?}", self.dim).unwrap();
        writeln!(s, "iteration {}\nvalues", self.iteration).unwrap();
        for v in &self.values {
            writeln!(s, "{v:?}").unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = |what: &str| CliError::Format(format!("density field: {what}"));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(bad("missing header line"));
        }
        let mut header = |key: &str| -> Result<Vec<String>, CliError> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing '{key}'")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(&format!("expected '{key}', got '{line}'")));
            }
            Ok(parts.map(String::from).collect())
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number '{s}'")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad integer '{s}'")));

        let dim = int(header("dim")?.first().ok_or_else(|| bad("empty dim"))?)?;
        let nel_raw = header("nel")?;
        let len_raw = header("lengths")?;
        if nel_raw.len() != 3 || len_raw.len() != 3 {
            return Err(bad("nel and lengths need three entries"));
        }
        let nel = [int(&nel_raw[0])?, int(&nel_raw[1])?, int(&nel_raw[2])?];
        let lengths = [num(&len_raw[0])?, num(&len_raw[1])?, num(&len_raw[2])?];
        let iteration = int(header("iteration")?.first().ok_or_else(|| bad("empty iteration"))?)?;
        header("values")?;
        let values = lines.filter(|l| !l.trim().is_empty()).map(|l| num(l.trim())).collect::<Result<Vec<_>, _>>()?;
        let field = Self { dim, nel, lengths, iteration, values };
        if !(dim == 2 || dim == 3) || (dim == 2 && nel[2] != 1) {
            return Err(bad(&format!("inconsistent dimension {dim} for nel {nel:?}")));
        }
        if field.values.len() != field.len() {
            return Err(bad(&format!("expected {} values, found {}", field.len(), field.values.len())));
        }
        Ok(field)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_text()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn text_round_trip_is_bitwise(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 12)) {
            let f = DensityField { dim: 2, nel: [4, 3, 1], lengths: [2.0, 0.1 + 0.2, 0.0], iteration: 3, values };
            let back = DensityField::parse(&f.to_text()).unwrap();
            prop_assert_eq!(back.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            f.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.lengths, f.lengths);
        }
    }

    #[test]
    fn rejects_malformed() {
        let f = DensityField { dim: 2, nel: [2, 1, 1], lengths: [1.0, 1.0, 0.0], iteration: 0, values: vec![0.5, 1.0] };
        let text = f.to_text();
        assert!(DensityField::parse(&text.replace("gravtop-field 1", "other")).is_err());
        assert!(DensityField::parse(text.trim_end().trim_end_matches("1.0")).is_err());
        assert!(DensityField::parse(&text.replace("nel 2 1 1", "nel 2 1 2")).is_err());
        assert!(DensityField::parse(&text.replace("0.5", "half")).is_err());
    }
}
