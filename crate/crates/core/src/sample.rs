use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest regressor dimension the asymptotic theory covers.
pub const MAX_DIM: usize = 3;

/// Row-major `n × p` regressor matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressors {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl Regressors {
    pub fn new(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument(
                "regressor dimension must be >= 1".into(),
            ));
        }
        if data.len() != n * p {
            return Err(Error::DimensionMismatch {
                expected: n * p,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite regressor at row {}, column {}",
                i / p + 1,
                i % p + 1
            )));
        }
        Ok(Regressors { n, p, data })
    }

    /// A single regressor column.
    pub fn from_column(x: Vec<f64>) -> Result<Self> {
        let n = x.len();
        Self::new(n, 1, x)
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let p = columns.len();
        if p == 0 {
            return Err(Error::InvalidArgument("no regressor columns".into()));
        }
        let n = columns[0].len();
        for c in columns {
            if c.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.len(),
                });
            }
        }
        let data = (0..n)
            .flat_map(|t| columns.iter().map(move |c| c[t]))
            .collect();
        Self::new(n, p, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.p..(t + 1) * self.p]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(j).step_by(self.p).copied()
    }

    /// Sample standard deviation (divisor `n − 1`) of column `j`.
    pub fn column_sd(&self, j: usize) -> f64 {
        let n = self.n as f64;
        let mean = self.column(j).sum::<f64>() / n;
        let ss: f64 = self.column(j).map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1.0)).sqrt()
    }

    /// Divides every column by its sample standard deviation.
    pub fn standardized(&self) -> Result<Self> {
        let sds: Vec<f64> = (0..self.p).map(|j| self.column_sd(j)).collect();
        if let Some(j) = sds.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::DegenerateColumn { column: j + 1 });
        }
        let data = self
            .data
            .chunks(self.p)
            .flat_map(|row| row.iter().zip(&sds).map(|(v, s)| v / s))
            .collect();
        Ok(Regressors {
            n: self.n,
            p: self.p,
            data,
        })
    }
}

/// Paired observations `(Y_t, X_t)` in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub y: Vec<f64>,
    pub x: Regressors,
}

impl Sample {
    pub fn new(y: Vec<f64>, x: Regressors) -> Result<Self> {
        if y.len() != x.n() {
            return Err(Error::DimensionMismatch {
                expected: x.n(),
                got: y.len(),
            });
        }
        if x.dim() > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "{} regressors given; the tests require p < 4",
                x.dim()
            )));
        }
        let min_n = x.dim() + 2;
        if y.len() < min_n {
            return Err(Error::InvalidArgument(format!(
                "need at least {min_n} observations for p = {}, got {}",
                x.dim(),
                y.len()
            )));
        }
        if let Some(t) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite response at row {}",
                t + 1
            )));
        }
        Ok(Sample { y, x })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let x = Regressors::from_column(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(Sample::new(vec![1.0, 2.0, 3.0, 4.0], x.clone()).is_ok());
        assert!(Sample::new(vec![1.0, 2.0, 3.0], x.clone()).is_err());
        let two = Regressors::from_column(vec![0.0, 1.0]).unwrap();
        assert!(Sample::new(vec![1.0, 2.0], two).is_err());
        assert!(Sample::new(vec![1.0, f64::NAN, 3.0, 4.0], x).is_err());
        let x3 = Regressors::from_column(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(Sample::new(vec![1.0, 2.0, 3.0], x3).unwrap().n(), 3);
        let wide = Regressors::new(10, 4, vec![0.0; 40]).unwrap();
        assert!(Sample::new(vec![0.0; 10], wide).is_err());
        assert!(Regressors::new(2, 1, vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn columns_and_rows() {
        let x = Regressors::from_columns(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(x.row(1), &[2.0, 5.0]);
        assert_eq!(x.column(1).collect::<Vec<_>>(), vec![4.0, 5.0, 6.0]);
        assert!((x.column_sd(0) - 1.0).abs() < 1e-15);
        let s = x.standardized().unwrap();
        assert!((s.column_sd(1) - 1.0).abs() < 1e-15);
        let flat = Regressors::from_column(vec![1.0; 4]).unwrap();
        assert!(flat.standardized().is_err());
    }
}
