//! The low-rank branch `s·A·W·B` in its three forms.
//!
//! * vanilla LoRA: the mixer `W` is the fixed identity;
//! * two-subspaces mixing: `W` is the fixed butterfly `[[I, I], [I, I]]`;
//! * MoSLoRA: `W` is a learnable dense `r x r` matrix.
//!
//! A fixed orthogonal mixer is also supported; it is what makes the mixed
//! and merged parameterizations follow the same SGD trajectory.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::init::{init_matrix, InitKind};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// Mixer placed between `A` and `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MixerKind {
    FixedIdentity,
    FixedButterfly,
    FixedOrthogonal,
    Learnable(InitKind),
}

/// Init tag stored for mixers that carry no init kind.
pub const NO_INIT_TAG: u8 = 255;

impl MixerKind {
    pub fn is_learnable(self) -> bool {
        matches!(self, MixerKind::Learnable(_))
    }

    pub fn tag(self) -> u8 {
        match self {
            MixerKind::FixedIdentity => 0,
            MixerKind::FixedButterfly => 1,
            MixerKind::FixedOrthogonal => 2,
            MixerKind::Learnable(_) => 3,
        }
    }

    pub fn init_tag(self) -> u8 {
        match self {
            MixerKind::Learnable(init) => init.ordinal(),
            _ => NO_INIT_TAG,
        }
    }

    pub fn from_tags(mixer: u8, init: u8) -> Result<Self> {
        let fixed = |kind| {
            if init == NO_INIT_TAG {
                Ok(kind)
            } else {
                Err(Error::Parse(format!(
                    "fixed mixer tag {mixer} carries init tag {init}"
                )))
            }
        };
        match mixer {
            0 => fixed(MixerKind::FixedIdentity),
            1 => fixed(MixerKind::FixedButterfly),
            2 => fixed(MixerKind::FixedOrthogonal),
            3 => InitKind::from_ordinal(init)
                .map(MixerKind::Learnable)
                .ok_or_else(|| Error::Parse(format!("unknown init tag {init}"))),
            other => Err(Error::Parse(format!("unknown mixer tag {other}"))),
        }
    }
}

impl fmt::Display for MixerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MixerKind::FixedIdentity => f.write_str("identity"),
            MixerKind::FixedButterfly => f.write_str("butterfly"),
            MixerKind::FixedOrthogonal => f.write_str("orthogonal"),
            MixerKind::Learnable(init) => write!(f, "learnable({init})"),
        }
    }
}

impl FromStr for MixerKind {
    type Err = Error;

    /// Accepts `identity`, `butterfly`, `orthogonal` and `learnable` (with a
    /// Kaiming-uniform init) or `learnable:<init>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.split_once(':') {
            Some(("learnable", init)) => Ok(MixerKind::Learnable(init.parse()?)),
            Some(_) => Err(Error::Parse(format!("unknown mixer {s:?}"))),
            None => match lower.as_str() {
                "identity" | "lora" => Ok(MixerKind::FixedIdentity),
                "butterfly" | "ts-mixing" => Ok(MixerKind::FixedButterfly),
                "orthogonal" => Ok(MixerKind::FixedOrthogonal),
                "learnable" => Ok(MixerKind::Learnable(InitKind::KaimingUniform)),
                _ => Err(Error::Parse(format!("unknown mixer {s:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterConfig {
    /// Input width.
    pub d1: usize,
    /// Output width.
    pub d2: usize,
    pub rank: usize,
    pub mixer: MixerKind,
    /// Scaling numerator; `0` means "no scaling".
    pub alpha: f64,
    pub seed: u64,
}

impl AdapterConfig {
    pub fn new(d1: usize, d2: usize, rank: usize, mixer: MixerKind) -> Self {
        Self {
            d1,
            d2,
            rank,
            mixer,
            alpha: 0.0,
            seed: 0,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d1 == 0 || self.d2 == 0 || self.rank == 0 {
            return Err(Error::Config(format!(
                "d1, d2 and rank must be at least 1 (got d1={}, d2={}, rank={})",
                self.d1, self.d2, self.rank
            )));
        }
        if self.mixer == MixerKind::FixedButterfly && !self.rank.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "butterfly mixer needs an even rank, got {}",
                self.rank
            )));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Config(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Branch scaling `alpha / r`, or `1` when `alpha == 0`.
    pub fn scaling(&self) -> f64 {
        if self.alpha == 0.0 {
            1.0
        } else {
            self.alpha / self.rank as f64
        }
    }

    /// Trainable parameter count: `(d1 + d2)·r`, plus `r²` for a learnable mixer.
    pub fn param_count(&self) -> usize {
        let base = (self.d1 + self.d2) * self.rank;
        if self.mixer.is_learnable() {
            base + self.rank * self.rank
        } else {
            base
        }
    }
}

/// Conditions worth surfacing about a freshly built adapter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdapterWarning {
    /// Zero mixer together with zero `B`: every gradient vanishes, training
    /// cannot move.
    ZeroMixerStagnation,
}

impl fmt::Display for AdapterWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdapterWarning::ZeroMixerStagnation => {
                f.write_str("zero mixer with zero B: all gradients vanish and training cannot move")
            }
        }
    }
}

/// Trainable triple `(A, W, B)` with its config.
#[derive(Debug, Clone, PartialEq)]
pub struct Adapter {
    config: AdapterConfig,
    a: Matrix,
    w: Matrix,
    b: Matrix,
    warnings: Vec<AdapterWarning>,
}

/// Square butterfly factor `[[I, I], [I, I]]` with `r/2`-sized identity blocks.
pub fn butterfly_mixer(rank: usize) -> Result<Matrix> {
    if rank == 0 || !rank.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "butterfly mixer needs an even rank, got {rank}"
        )));
    }
    let half = rank / 2;
    Matrix::from_fn(
        rank,
        rank,
        |i, j| if i % half == j % half { 1.0 } else { 0.0 },
    )
}

impl Adapter {
    /// Fresh adapter: `A` Kaiming-uniform, `B = 0`, `W` set by the mixer kind.
    pub fn new(config: AdapterConfig) -> Result<Self> {
        config.validate()?;
        let rng = Rng::new(config.seed);
        let r = config.rank;
        let a = init_matrix(
            InitKind::KaimingUniform,
            config.d1,
            r,
            &mut rng.stream("adapter/A"),
        )?;
        let w = match config.mixer {
            MixerKind::FixedIdentity => Matrix::identity(r),
            MixerKind::FixedButterfly => butterfly_mixer(r)?,
            MixerKind::FixedOrthogonal => {
                init_matrix(InitKind::Orthogonal, r, r, &mut rng.stream("adapter/W"))?
            }
            MixerKind::Learnable(init) => init_matrix(init, r, r, &mut rng.stream("adapter/W"))?,
        };
        let b = Matrix::zeros(r, config.d2);
        Self::from_parts(config, a, w, b)
    }

    /// Assembles an adapter from explicit factors, checking their shapes.
    pub fn from_parts(config: AdapterConfig, a: Matrix, w: Matrix, b: Matrix) -> Result<Self> {
        config.validate()?;
        let (d1, d2, r) = (config.d1, config.d2, config.rank);
        for (name, m, want) in [("A", &a, (d1, r)), ("W", &w, (r, r)), ("B", &b, (r, d2))] {
            if m.shape() != want {
                return Err(Error::Config(format!(
                    "{name} must be {want:?} for this config, got {:?}",
                    m.shape()
                )));
            }
        }
        let mut warnings = Vec::new();
        if config.mixer == MixerKind::Learnable(InitKind::Zeros) {
            warnings.push(AdapterWarning::ZeroMixerStagnation);
        }
        Ok(Self {
            config,
            a,
            w,
            b,
            warnings,
        })
    }

    /// Same config, new factors.
    pub fn with_factors(&self, a: Matrix, w: Matrix, b: Matrix) -> Result<Self> {
        Self::from_parts(self.config.clone(), a, w, b)
    }

    pub fn config(&self) -> &AdapterConfig {
        &self.config
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn w_trainable(&self) -> bool {
        self.config.mixer.is_learnable()
    }

    pub fn warnings(&self) -> &[AdapterWarning] {
        &self.warnings
    }

    pub fn scaling(&self) -> f64 {
        self.config.scaling()
    }

    /// `s·(A·W·B)`, shape `d1 x d2`.
    pub fn delta_weight(&self) -> Result<Matrix> {
        self.a
            .matmul(&self.w)?
            .matmul(&self.b)?
            .scale(self.scaling())
    }

    /// `x·W0 + s·x·A·W·B` for `x` of shape `n x d1`.
    pub fn forward(&self, w0: &Matrix, x: &Matrix) -> Result<Matrix> {
        self.check_base(w0, "forward")?;
        let base = x.matmul(w0)?;
        let branch = x
            .matmul(&self.a)?
            .matmul(&self.w)?
            .matmul(&self.b)?
            .scale(self.scaling())?;
        base.add(&branch)
    }

    /// Folds the branch into the base weight: `W0 + s·A·W·B`.
    pub fn merge(&self, w0: &Matrix) -> Result<Matrix> {
        self.check_base(w0, "merge")?;
        w0.add(&self.delta_weight()?)
    }

    fn check_base(&self, w0: &Matrix, op: &'static str) -> Result<()> {
        let want = (self.config.d1, self.config.d2);
        if w0.shape() != want {
            return Err(Error::Shape {
                op,
                left: w0.shape(),
                right: want,
            });
        }
        Ok(())
    }

    /// Splits `A` by column and `B` by row into two halves.
    pub fn decompose_two_subspaces(&self) -> Result<SubspacePair> {
        let r = self.config.rank;
        if !r.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "two-subspace split needs an even rank, got {r}"
            )));
        }
        let h = r / 2;
        Ok(SubspacePair {
            a1: self.a.column_block(0, h),
            b1: self.b.row_block(0, h),
            a2: self.a.column_block(h, r),
            b2: self.b.row_block(h, r),
        })
    }

    /// Nonzero mixer entries, each weighting the rank-1 term `A_i·B_j`.
    pub fn rank1_expand(&self) -> Vec<Rank1Term> {
        let r = self.config.rank;
        (0..r)
            .flat_map(|i| (0..r).map(move |j| (i, j)))
            .filter_map(|(i, j)| {
                let weight = self.w.get(i, j);
                (weight != 0.0).then_some(Rank1Term { weight, i, j })
            })
            .collect()
    }

    /// `Σ w_ij·A_i·B_j` over the given terms (unscaled).
    pub fn rank1_reconstruct(&self, terms: &[Rank1Term]) -> Result<Matrix> {
        let mut acc = Matrix::zeros(self.config.d1, self.config.d2);
        for t in terms {
            let outer = self.a.outer_column_row(t.i, &self.b, t.j)?;
            acc = acc.add(&outer.scale(t.weight)?)?;
        }
        Ok(acc)
    }

    /// Gradients of a scalar objective with respect to `A`, `W` and `B`,
    /// given its gradient `upstream` with respect to the merged weight.
    ///
    /// With `D = s·upstream`: `gA = D·Bᵀ·Wᵀ`, `gW = Aᵀ·D·Bᵀ`, `gB = Wᵀ·Aᵀ·D`.
    pub fn grad(&self, upstream: &Matrix) -> Result<GradTriple> {
        let want = (self.config.d1, self.config.d2);
        if upstream.shape() != want {
            return Err(Error::Shape {
                op: "grad",
                left: upstream.shape(),
                right: want,
            });
        }
        let d = upstream.scale(self.scaling())?;
        let bt = self.b.transpose();
        let wt = self.w.transpose();
        let at = self.a.transpose();
        Ok(GradTriple {
            ga: d.matmul(&bt)?.matmul(&wt)?,
            gw: at.matmul(&d)?.matmul(&bt)?,
            gb: wt.matmul(&at)?.matmul(&d)?,
            w_inert: !self.w_trainable(),
        })
    }
}

/// One rank-1 component of `A·W·B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rank1Term {
    pub weight: f64,
    /// Column of `A`.
    pub i: usize,
    /// Row of `B`.
    pub j: usize,
}

/// Column halves of `A` and row halves of `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspacePair {
    pub a1: Matrix,
    pub b1: Matrix,
    pub a2: Matrix,
    pub b2: Matrix,
}

impl SubspacePair {
    /// Reassembles `(A, B)`.
    pub fn reassemble(&self) -> Result<(Matrix, Matrix)> {
        Ok((self.a1.hcat(&self.a2)?, self.b1.vcat(&self.b2)?))
    }

    /// `A1·B1 + A2·B2`, the plain sum of the two subspaces.
    pub fn plain_delta(&self) -> Result<Matrix> {
        self.a1.matmul(&self.b1)?.add(&self.a2.matmul(&self.b2)?)
    }
}

/// Two-subspaces mixing: `(A1 + A2)·(B1 + B2)`.
pub fn ts_mix_delta(pair: &SubspacePair) -> Result<Matrix> {
    pair.a1.add(&pair.a2)?.matmul(&pair.b1.add(&pair.b2)?)
}

/// Gradients for the three factors. `gw` is always computed; `w_inert`
/// marks it as one the optimizer must not apply.
#[derive(Debug, Clone, PartialEq)]
pub struct GradTriple {
    pub ga: Matrix,
    pub gw: Matrix,
    pub gb: Matrix,
    pub w_inert: bool,
}

impl GradTriple {
    pub fn is_zero(&self) -> bool {
        self.ga.is_zero() && self.gw.is_zero() && self.gb.is_zero()
    }

    /// Largest absolute entry across the three gradients.
    pub fn max_abs(&self) -> f64 {
        self.ga
            .max_abs()
            .max(self.gw.max_abs())
            .max(self.gb.max_abs())
    }

    /// Largest absolute entry-wise difference across the three gradients.
    pub fn max_abs_diff(&self, other: &GradTriple) -> Result<f64> {
        Ok(self
            .ga
            .max_abs_diff(&other.ga)?
            .max(self.gw.max_abs_diff(&other.gw)?)
            .max(self.gb.max_abs_diff(&other.gb)?))
    }

    /// `max|self - other| / max(max|self|, max|other|)`, with the denominator
    /// floored at `1e-12` so that two vanishing gradients compare as equal.
    pub fn relative_error(&self, other: &GradTriple) -> Result<f64> {
        let scale = self.max_abs().max(other.max_abs()).max(1e-12);
        Ok(self.max_abs_diff(other)? / scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn two_by_two(w: Matrix, mixer: MixerKind) -> Adapter {
        Adapter::from_parts(
            AdapterConfig::new(2, 2, 2, mixer),
            Matrix::identity(2),
            w,
            m(&[&[1.0, 2.0], &[3.0, 4.0]]),
        )
        .unwrap()
    }

    #[test]
    fn fresh_adapter_has_zero_delta() {
        for mixer in [
            MixerKind::FixedIdentity,
            MixerKind::FixedButterfly,
            MixerKind::FixedOrthogonal,
            MixerKind::Learnable(InitKind::KaimingUniform),
        ] {
            let ad = Adapter::new(AdapterConfig::new(6, 5, 4, mixer).with_seed(3)).unwrap();
            assert!(ad.b().is_zero());
            assert!(ad.delta_weight().unwrap().is_zero());
            assert_eq!(ad.w_trainable(), mixer.is_learnable());
        }
    }

    #[test]
    fn identity_mixer_is_identity() {
        let ad = Adapter::new(AdapterConfig::new(8, 8, 4, MixerKind::FixedIdentity)).unwrap();
        assert_eq!(ad.w(), &Matrix::identity(4));
    }

    #[test]
    fn odd_rank_butterfly_is_config_error() {
        let cfg = AdapterConfig::new(8, 8, 3, MixerKind::FixedButterfly);
        assert!(matches!(Adapter::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn zero_rank_is_config_error() {
        let cfg = AdapterConfig::new(8, 8, 0, MixerKind::FixedIdentity);
        assert!(matches!(Adapter::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn zero_mixer_warns() {
        let ad = Adapter::new(AdapterConfig::new(
            4,
            4,
            2,
            MixerKind::Learnable(InitKind::Zeros),
        ))
        .unwrap();
        assert_eq!(ad.warnings(), &[AdapterWarning::ZeroMixerStagnation]);
        assert!(ad.w().is_zero());
        let ad = Adapter::new(AdapterConfig::new(
            4,
            4,
            2,
            MixerKind::Learnable(InitKind::Normal),
        ))
        .unwrap();
        assert!(ad.warnings().is_empty());
    }

    #[test]
    fn scaling_values() {
        let cfg = |alpha, rank| {
            AdapterConfig::new(4, 4, rank, MixerKind::FixedIdentity).with_alpha(alpha)
        };
        assert_eq!(cfg(32.0, 16).scaling(), 2.0);
        assert_eq!(cfg(0.0, 16).scaling(), 1.0);
        assert_eq!(cfg(16.0, 16).scaling(), 1.0);
    }

    #[test]
    fn delta_weight_hand_cases() {
        let ad = two_by_two(Matrix::identity(2), MixerKind::FixedIdentity);
        assert_eq!(ad.delta_weight().unwrap(), m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let ad = two_by_two(
            m(&[&[1.0, 1.0], &[1.0, 1.0]]),
            MixerKind::Learnable(InitKind::Zeros),
        );
        assert_eq!(ad.delta_weight().unwrap(), m(&[&[4.0, 6.0], &[4.0, 6.0]]));
    }

    #[test]
    fn fresh_forward_is_base_product() {
        let ad = Adapter::new(AdapterConfig::new(3, 2, 2, MixerKind::FixedOrthogonal).with_seed(9))
            .unwrap();
        let w0 = Matrix::from_fn(3, 2, |i, j| (i as f64) - 0.5 * j as f64).unwrap();
        let x = Matrix::from_fn(4, 3, |i, j| (i + 2 * j) as f64 * 0.25).unwrap();
        assert_eq!(ad.forward(&w0, &x).unwrap(), x.matmul(&w0).unwrap());
        assert_eq!(ad.merge(&w0).unwrap(), w0);
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let ad = Adapter::new(AdapterConfig::new(3, 2, 2, MixerKind::FixedIdentity)).unwrap();
        let w0 = Matrix::zeros(3, 2);
        assert!(ad.forward(&w0, &Matrix::zeros(1, 4)).is_err());
        assert!(ad
            .forward(&Matrix::zeros(2, 2), &Matrix::zeros(1, 3))
            .is_err());
        assert!(ad.merge(&Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn decompose_hand_case() {
        let ad = two_by_two(Matrix::identity(2), MixerKind::FixedIdentity);
        let pair = ad.decompose_two_subspaces().unwrap();
        assert_eq!(pair.a1, m(&[&[1.0], &[0.0]]));
        assert_eq!(pair.b1, m(&[&[1.0, 2.0]]));
        assert_eq!(pair.a2, m(&[&[0.0], &[1.0]]));
        assert_eq!(pair.b2, m(&[&[3.0, 4.0]]));
        assert_eq!(pair.plain_delta().unwrap(), m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        assert_eq!(ts_mix_delta(&pair).unwrap(), m(&[&[4.0, 6.0], &[4.0, 6.0]]));
    }

    #[test]
    fn decompose_odd_rank_fails() {
        let ad = Adapter::new(AdapterConfig::new(4, 4, 3, MixerKind::FixedIdentity)).unwrap();
        assert!(ad.decompose_two_subspaces().is_err());
    }

    #[test]
    fn ts_mix_with_empty_second_half() {
        let pair = SubspacePair {
            a1: m(&[&[1.0], &[2.0]]),
            b1: m(&[&[3.0, -1.0]]),
            a2: Matrix::zeros(2, 1),
            b2: Matrix::zeros(1, 2),
        };
        assert_eq!(
            ts_mix_delta(&pair).unwrap(),
            pair.a1.matmul(&pair.b1).unwrap()
        );
    }

    #[test]
    fn butterfly_shapes() {
        assert_eq!(butterfly_mixer(2).unwrap(), m(&[&[1.0, 1.0], &[1.0, 1.0]]));
        let b4 = butterfly_mixer(4).unwrap();
        for i in 0..2 {
            for (p, q) in [(i, i), (i, i + 2), (i + 2, i), (i + 2, i + 2)] {
                assert_eq!(b4.get(p, q), 1.0);
            }
        }
        assert_eq!(b4.data().iter().filter(|&&v| v == 1.0).count(), 8);
        assert_eq!(b4.data().iter().filter(|&&v| v == 0.0).count(), 8);
        assert!(butterfly_mixer(5).is_err());
    }

    #[test]
    fn rank1_term_counts() {
        let r = 4;
        let count = |mixer| {
            Adapter::new(AdapterConfig::new(8, 8, r, mixer).with_seed(1))
                .unwrap()
                .rank1_expand()
                .len()
        };
        assert_eq!(count(MixerKind::FixedIdentity), r);
        assert_eq!(count(MixerKind::FixedButterfly), 2 * r);
        assert_eq!(count(MixerKind::Learnable(InitKind::KaimingUniform)), r * r);
    }

    #[test]
    fn grad_vanishes_at_zero_mixer_and_b() {
        let ad = Adapter::new(
            AdapterConfig::new(5, 3, 2, MixerKind::Learnable(InitKind::Zeros)).with_seed(4),
        )
        .unwrap();
        let upstream = Matrix::from_fn(5, 3, |i, j| 1.0 + i as f64 - j as f64).unwrap();
        assert!(ad.grad(&upstream).unwrap().is_zero());
    }

    #[test]
    fn grad_with_zero_b_only_moves_b() {
        let ad = Adapter::new(
            AdapterConfig::new(5, 3, 2, MixerKind::Learnable(InitKind::KaimingUniform))
                .with_seed(4),
        )
        .unwrap();
        let upstream = Matrix::from_fn(5, 3, |i, j| 1.0 + i as f64 - j as f64).unwrap();
        let g = ad.grad(&upstream).unwrap();
        assert!(g.ga.is_zero());
        assert!(g.gw.is_zero());
        let want = ad
            .w()
            .transpose()
            .matmul(&ad.a().transpose())
            .unwrap()
            .matmul(&upstream)
            .unwrap();
        assert_eq!(g.gb, want);
        assert!(!g.w_inert);
    }

    #[test]
    fn grad_marks_fixed_mixer_inert() {
        let ad = Adapter::new(AdapterConfig::new(4, 4, 2, MixerKind::FixedIdentity)).unwrap();
        assert!(ad.grad(&Matrix::zeros(4, 4)).unwrap().w_inert);
        assert!(ad.grad(&Matrix::zeros(4, 3)).is_err());
    }

    #[test]
    fn param_counts() {
        let fixed = AdapterConfig::new(8, 8, 2, MixerKind::FixedIdentity);
        let learn = AdapterConfig::new(8, 8, 2, MixerKind::Learnable(InitKind::KaimingUniform));
        assert_eq!(fixed.param_count(), 32);
        assert_eq!(learn.param_count(), 36);
        let big = AdapterConfig::new(
            4096,
            4096,
            16,
            MixerKind::Learnable(InitKind::KaimingUniform),
        );
        assert_eq!(big.param_count(), 131_328);
    }

    #[test]
    fn mixer_tags_roundtrip() {
        let mut kinds = vec![
            MixerKind::FixedIdentity,
            MixerKind::FixedButterfly,
            MixerKind::FixedOrthogonal,
        ];
        kinds.extend(InitKind::ALL.map(MixerKind::Learnable));
        for k in kinds {
            assert_eq!(MixerKind::from_tags(k.tag(), k.init_tag()).unwrap(), k);
        }
        assert!(MixerKind::from_tags(4, NO_INIT_TAG).is_err());
        assert!(MixerKind::from_tags(0, 1).is_err());
        assert!(MixerKind::from_tags(3, 9).is_err());
    }

    #[test]
    fn mixer_parsing() {
        assert_eq!(
            "identity".parse::<MixerKind>().unwrap(),
            MixerKind::FixedIdentity
        );
        assert_eq!(
            "learnable:zeros".parse::<MixerKind>().unwrap(),
            MixerKind::Learnable(InitKind::Zeros)
        );
        assert!("learnable:bogus".parse::<MixerKind>().is_err());
        assert!("dense".parse::<MixerKind>().is_err());
    }
}
