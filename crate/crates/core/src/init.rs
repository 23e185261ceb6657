//! Initialization schemes for adapter factors and mixers.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Stream;

/// Standard deviation used by [`InitKind::Normal`].
pub const NORMAL_INIT_STD: f64 = 0.02;

/// Initialization strategy. The discriminant is the on-disk ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum InitKind {
    Zeros = 0,
    Identity = 1,
    Normal = 2,
    Orthogonal = 3,
    KaimingUniform = 4,
}

impl InitKind {
    pub const ALL: [InitKind; 5] = [
        InitKind::Zeros,
        InitKind::Identity,
        InitKind::Normal,
        InitKind::Orthogonal,
        InitKind::KaimingUniform,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn from_ordinal(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.ordinal() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            InitKind::Zeros => "zeros",
            InitKind::Identity => "identity",
            InitKind::Normal => "normal",
            InitKind::Orthogonal => "orthogonal",
            InitKind::KaimingUniform => "kaiming",
        }
    }

    pub fn requires_square(self) -> bool {
        matches!(self, InitKind::Identity | InitKind::Orthogonal)
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zeros" | "zero" => Ok(InitKind::Zeros),
            "identity" => Ok(InitKind::Identity),
            "normal" => Ok(InitKind::Normal),
            "orthogonal" | "orth" => Ok(InitKind::Orthogonal),
            "kaiming" | "kaiming-uniform" | "kaiminguniform" => Ok(InitKind::KaimingUniform),
            other => Err(Error::Parse(format!("unknown init kind {other:?}"))),
        }
    }
}

/// Draws a `rows x cols` matrix of the given kind.
///
/// Kaiming-uniform samples `U[-1/sqrt(rows), 1/sqrt(rows))`: the matrix is
/// applied by post-multiplication, so its fan-in is its row count.
/// Orthogonal fills a square matrix with standard normals, takes the Q factor
/// of its QR decomposition and flips each column to make `diag(R)` positive.
pub fn init_matrix(
    kind: InitKind,
    rows: usize,
    cols: usize,
    stream: &mut Stream,
) -> Result<Matrix> {
    if kind.requires_square() && rows != cols {
        return Err(Error::NotSquare {
            op: "init_matrix",
            shape: (rows, cols),
        });
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Precondition(format!(
            "matrix dimensions must be positive, got {rows}x{cols}"
        )));
    }
    match kind {
        InitKind::Zeros => Ok(Matrix::zeros(rows, cols)),
        InitKind::Identity => Ok(Matrix::identity(rows)),
        InitKind::Normal => Matrix::from_fn(rows, cols, |_, _| stream.normal(NORMAL_INIT_STD)),
        InitKind::KaimingUniform => {
            let bound = 1.0 / (rows as f64).sqrt();
            Matrix::from_fn(rows, cols, |_, _| stream.uniform(-bound, bound))
        }
        InitKind::Orthogonal => {
            let gauss = Matrix::from_fn(rows, cols, |_, _| stream.standard_normal())?;
            let (q, r) = gauss.qr()?;
            let signs: Vec<f64> = (0..rows)
                .map(|j| if r.get(j, j) < 0.0 { -1.0 } else { 1.0 })
                .collect();
            Matrix::from_fn(rows, cols, |i, j| q.get(i, j) * signs[j])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn draw(kind: InitKind, rows: usize, cols: usize, seed: u64) -> Result<Matrix> {
        init_matrix(kind, rows, cols, &mut Rng::new(seed).stream("t"))
    }

    #[test]
    fn zeros_and_identity() {
        assert!(draw(InitKind::Zeros, 2, 3, 0).unwrap().is_zero());
        assert_eq!(
            draw(InitKind::Identity, 3, 3, 0).unwrap(),
            Matrix::identity(3)
        );
    }

    #[test]
    fn square_kinds_reject_rectangles() {
        assert!(matches!(
            draw(InitKind::Identity, 2, 3, 0),
            Err(Error::NotSquare { .. })
        ));
        assert!(matches!(
            draw(InitKind::Orthogonal, 3, 2, 0),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn kaiming_bound() {
        let m = draw(InitKind::KaimingUniform, 100, 100, 3).unwrap();
        assert!(m.data().iter().all(|v| (-0.1..=0.1).contains(v)));
        // the bound is actually used, not something much tighter
        assert!(m.max_abs() > 0.09);
    }

    #[test]
    fn normal_scale() {
        let m = draw(InitKind::Normal, 100, 100, 5).unwrap();
        let n = m.data().len() as f64;
        let mean = m.data().iter().sum::<f64>() / n;
        let var = m.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-3);
        assert!((var.sqrt() - NORMAL_INIT_STD).abs() < 1e-3);
    }

    #[test]
    fn orthogonal_is_orthogonal_for_many_seeds() {
        for seed in 0..50 {
            for n in [1, 2, 4, 7] {
                let q = draw(InitKind::Orthogonal, n, n, seed).unwrap();
                let eye = Matrix::identity(n);
                assert!(
                    q.matmul(&q.transpose())
                        .unwrap()
                        .max_abs_diff(&eye)
                        .unwrap()
                        <= 1e-10
                );
                assert!(
                    q.transpose()
                        .matmul(&q)
                        .unwrap()
                        .max_abs_diff(&eye)
                        .unwrap()
                        <= 1e-10
                );
            }
        }
    }

    #[test]
    fn draws_are_bitwise_reproducible() {
        for kind in InitKind::ALL {
            let a = draw(kind, 6, 6, 11).unwrap();
            let b = draw(kind, 6, 6, 11).unwrap();
            let bits = |m: &Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn ordinals_roundtrip() {
        for kind in InitKind::ALL {
            assert_eq!(InitKind::from_ordinal(kind.ordinal()), Some(kind));
            assert_eq!(kind.name().parse::<InitKind>().unwrap(), kind);
        }
        assert_eq!(InitKind::from_ordinal(255), None);
    }
}
