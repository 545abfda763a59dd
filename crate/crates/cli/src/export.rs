//! Grayscale PNG for 2D fields, legacy VTK volumes for 3D fields.

use std::fmt::Write as _;
use std::path::Path;

use image::{GrayImage, Luma};

use crate::field::DensityField;
use crate::CliError;

pub const DEFAULT_THRESHOLD: f64 = 0.90;

/// Pixel intensity `1 - x_bar`, so solid is black. The top image row is the
/// top of the domain. With `threshold`, pixels are binarized instead.
pub fn grayscale(field: &DensityField, threshold: Option<f64>) -> Result<GrayImage, CliError> {
    if field.dim != 2 {
        return Err(CliError::Usage("PNG export needs a 2D field; use VTK for 3D".into()));
    }
    let [nx, ny, _] = field.nel;
    Ok(GrayImage::from_fn(nx as u32, ny as u32, |i, row| {
        let v = field.at(i as usize, ny - 1 - row as usize, 0).clamp(0.0, 1.0);
        let v = match threshold {
            Some(t) => f64::from(v >= t),
            None => v,
        };
        Luma([((1.0 - v) * 255.0).round() as u8])
    }))
}

pub fn write_png(field: &DensityField, threshold: Option<f64>, path: &Path) -> Result<(), CliError> {
    grayscale(field, threshold)?.save(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// `STRUCTURED_POINTS` with the physical density as cell data plus a 0/1
/// `solid` mask at `threshold`, for isosurface or threshold filters.
pub fn vtk_text(field: &DensityField, threshold: f64) -> String {
    let [nx, ny, nz] = field.nel;
    let h: Vec<f64> =
        (0..3).map(|a| if field.nel[a] > 0 { field.lengths[a] / field.nel[a] as f64 } else { 0.0 }).collect();
    let hz = if field.dim == 2 { 1.0 } else { h[2] };
    let mut s = String::with_capacity(field.values.len() * 24 + 512);
    writeln!(s, "# vtk DataFile Version 3.0").unwrap();
    writeln!(s, "gravtop density, iteration {}, solid threshold {threshold}", field.iteration).unwrap();
    writeln!(s, "ASCII\nDATASET STRUCTURED_POINTS").unwrap();
    writeln!(s, "DIMENSIONS {} {} {}", nx + 1, ny + 1, nz + 1).unwrap();
    writeln!(s, "ORIGIN 0 0 0\nSPACING {:?} {:?} {hz:?}", h[0], h[1]).unwrap();
    writeln!(s, "CELL_DATA {}", field.values.len()).unwrap();
    writeln!(s, "SCALARS x_bar double 1\nLOOKUP_TABLE default").unwrap();
    for v in &field.values {
        writeln!(s, "{v:?}").unwrap();
    }
    writeln!(s, "SCALARS solid int 1\nLOOKUP_TABLE default").unwrap();
    for v in &field.values {
        writeln!(s, "{}", u8::from(*v >= threshold)).unwrap();
    }
    s
}

pub fn write_vtk(field: &DensityField, threshold: f64, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, vtk_text(field, threshold)).map_err(|e| CliError::io(path, e))
}

/// PNG for 2D, VTK otherwise. The threshold binarizes 2D images only when given.
pub fn write_default(
    field: &DensityField,
    threshold: Option<f64>,
    stem: &Path,
) -> Result<std::path::PathBuf, CliError> {
    if field.dim == 2 {
        let path = stem.with_extension("png");
        write_png(field, threshold, &path)?;
        Ok(path)
    } else {
        let path = stem.with_extension("vtk");
        write_vtk(field, threshold.unwrap_or(DEFAULT_THRESHOLD), &path)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field2d() -> DensityField {
        // bottom row solid, top row void
        DensityField {
            dim: 2,
            nel: [3, 2, 1],
            lengths: [3.0, 2.0, 0.0],
            iteration: 1,
            values: vec![1.0, 1.0, 0.5, 0.0, 0.0, 0.95],
        }
    }

    #[test]
    fn solid_is_black_and_top_row_first() {
        let img = grayscale(&field2d(), None).unwrap();
        assert_eq!(img.dimensions(), (3, 2));
        assert_eq!(img.get_pixel(0, 1)[0], 0);
        assert_eq!(img.get_pixel(0, 0)[0], 255);
        assert_eq!(img.get_pixel(2, 1)[0], 128);
        let bin = grayscale(&field2d(), Some(DEFAULT_THRESHOLD)).unwrap();
        assert_eq!((bin.get_pixel(2, 1)[0], bin.get_pixel(2, 0)[0]), (255, 0));
    }

    #[test]
    fn vtk_layout() {
        let f =
            DensityField { dim: 3, nel: [2, 1, 1], lengths: [1.0, 0.5, 0.5], iteration: 4, values: vec![0.95, 0.2] };
        let text = vtk_text(&f, 0.9);
        assert!(text.contains("DIMENSIONS 3 2 2"));
        assert!(text.contains("SPACING 0.5 0.5 0.5"));
        assert!(text.contains("CELL_DATA 2"));
        assert!(text.trim_end().ends_with("SCALARS solid int 1\nLOOKUP_TABLE default\n1\n0"));
        assert!(grayscale(&f, None).is_err());
    }
}
