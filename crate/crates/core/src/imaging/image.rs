use serde::{Deserialize, Serialize};

use crate::error::{GsdError, Result};

/// One-dimensional probability profile against a coordinate in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub coordinate: Vec<f64>,
    pub value: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<Vec<f64>>,
}

impl Profile {
    pub fn new(coordinate: Vec<f64>, value: Vec<f64>, uncertainty: Option<Vec<f64>>) -> Result<Self> {
        if coordinate.len() != value.len() {
            return Err(GsdError::domain(format!(
                "profile has {} coordinates but {} values",
                coordinate.len(),
                value.len()
            )));
        }
        if let Some(u) = &uncertainty {
            if u.len() != value.len() {
                return Err(GsdError::domain("uncertainty length differs from value length"));
            }
            if u.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(GsdError::domain("uncertainties must be finite and non-negative"));
            }
        }
        if coordinate.iter().chain(&value).any(|v| !v.is_finite()) {
            return Err(GsdError::domain("profile contains non-finite entries"));
        }
        if coordinate.len() > 1 {
            let up = coordinate.windows(2).all(|w| w[1] > w[0]);
            let down = coordinate.windows(2).all(|w| w[1] < w[0]);
            if !(up || down) {
                return Err(GsdError::domain("profile coordinates must be strictly monotone"));
            }
        }
        Ok(Self { coordinate, value, uncertainty })
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Scan image on a rectangular grid. `values[row * a.len() + col]`, rows
/// indexed by `b_coords`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    pub a_coords: Vec<f64>,
    pub b_coords: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

impl ImageGrid {
    pub fn new(a_coords: Vec<f64>, b_coords: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != a_coords.len() * b_coords.len() {
            return Err(GsdError::domain(format!(
                "image has {} values for a {}x{} grid",
                values.len(),
                a_coords.len(),
                b_coords.len()
            )));
        }
        Ok(Self { a_coords, b_coords, values, provenance: serde_json::Value::Null })
    }

    pub fn width(&self) -> usize {
        self.a_coords.len()
    }

    pub fn height(&self) -> usize {
        self.b_coords.len()
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.width()..(row + 1) * self.width()]
    }
}

/// Profile along `a` averaged over rows whose `b` lies in `[b_lo, b_hi]`.
/// With two or more rows the uncertainty is the standard error of the mean.
pub fn profile_cut(image: &ImageGrid, b_lo: f64, b_hi: f64) -> Result<Profile> {
    let rows: Vec<usize> = (0..image.height())
        .filter(|&r| image.b_coords[r] >= b_lo && image.b_coords[r] <= b_hi)
        .collect();
    if rows.is_empty() {
        return Err(GsdError::domain(format!("no image rows in [{b_lo:e}, {b_hi:e}]")));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; image.width()];
    for &r in &rows {
        for (m, v) in mean.iter_mut().zip(image.row(r)) {
            *m += v / n;
        }
    }
    let uncertainty = (rows.len() >= 2).then(|| {
        (0..image.width())
            .map(|c| {
                let ss: f64 = rows.iter().map(|&r| (image.get(c, r) - mean[c]).powi(2)).sum();
                (ss / (n - 1.0) / n).sqrt()
            })
            .collect()
    });
    Profile::new(image.a_coords.clone(), mean, uncertainty)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_validation() {
        assert!(Profile::new(vec![0.0, 1.0], vec![0.1], None).is_err());
        assert!(Profile::new(vec![0.0, 0.0], vec![0.1, 0.2], None).is_err());
        assert!(Profile::new(vec![1.0, 0.0], vec![0.1, 0.2], None).is_ok());
        assert!(Profile::new(vec![0.0, 1.0], vec![0.1, 0.2], Some(vec![0.1])).is_err());
        assert!(Profile::new(vec![0.0, 1.0], vec![f64::NAN, 0.2], None).is_err());
    }

    #[test]
    fn cut_averages_rows() {
        let img = ImageGrid::new(vec![0.0, 1.0, 2.0], vec![-1.0, 0.0, 1.0], vec![0., 1., 2., 2., 3., 4., 4., 5., 6.]).unwrap();
        let p = profile_cut(&img, -1.0, 1.0).unwrap();
        assert_eq!(p.value, vec![2.0, 3.0, 4.0]);
        let u = p.uncertainty.unwrap();
        assert!((u[0] - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let single = profile_cut(&img, -0.5, 0.5).unwrap();
        assert_eq!(single.value, vec![2.0, 3.0, 4.0]);
        assert!(single.uncertainty.is_none());
        assert!(profile_cut(&img, 5.0, 6.0).is_err());
    }
}
