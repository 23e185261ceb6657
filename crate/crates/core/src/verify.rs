//! Self-check suite run by `moslora verify`.
//!
//! Each property is checked over many seeded random instances and reported
//! with the largest error observed. The gradient routine under test is
//! pluggable so a deliberately broken one can be fed in.

use std::fmt;
use std::path::Path;

use crate::adapter::{ts_mix_delta, Adapter, AdapterConfig, GradTriple, MixerKind};
use crate::checkpoint::{decode_checkpoint, decode_matrix, encode_checkpoint, encode_matrix};
use crate::dynamics::{
    finite_diff_grads, mse_loss_and_upstream, one_step_trajectory, train, Dataset, TrainConfig,
    DEFAULT_FD_STEP,
};
use crate::error::{Error, Result};
use crate::init::{init_matrix, InitKind};
use crate::matrix::Matrix;
use crate::rng::{Rng, Stream};

pub const GRADIENT_REL_TOL: f64 = 1e-6;
pub const EXACT_TOL: f64 = 1e-12;
pub const MERGE_TOL: f64 = 1e-10;
pub const INEQUIVALENCE_GAP: f64 = 1e-8;

pub type GradFn = fn(&Adapter, &Matrix) -> Result<GradTriple>;

pub const GROUPS: [&str; 7] = [
    "gradient",
    "stagnation",
    "mixer",
    "trajectory",
    "merge",
    "params",
    "persistence",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub group: &'static str,
    pub name: &'static str,
    pub passed: bool,
    /// Worst error observed (or count of failing instances for counting checks).
    pub max_error: f64,
    pub tolerance: f64,
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}/{} max_err={:.3e} tol={:.0e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.group,
            self.name,
            self.max_error,
            self.tolerance
        )
    }
}

/// A random adapter with nonzero `B`, a base weight and a small dataset.
#[derive(Debug, Clone)]
pub struct Instance {
    pub adapter: Adapter,
    pub w0: Matrix,
    pub data: Dataset,
}

fn normal_matrix(rows: usize, cols: usize, std: f64, s: &mut Stream) -> Result<Matrix> {
    Matrix::from_fn(rows, cols, |_, _| s.normal(std))
}

fn draw_dim(s: &mut Stream, max: usize) -> usize {
    1 + (s.uniform(0.0, max as f64) as usize).min(max - 1)
}

/// Builds the instance for `config`, replacing `B` with standard normals.
pub fn random_instance(config: AdapterConfig, n: usize) -> Result<Instance> {
    let rng = Rng::new(config.seed);
    let (d1, d2, r) = (config.d1, config.d2, config.rank);
    let fresh = Adapter::new(config)?;
    let b = normal_matrix(r, d2, 1.0, &mut rng.stream("instance/B"))?;
    let adapter = fresh.with_factors(fresh.a().clone(), fresh.w().clone(), b)?;
    let w0 = normal_matrix(
        d1,
        d2,
        1.0 / (d1 as f64).sqrt(),
        &mut rng.stream("instance/W0"),
    )?;
    let x = normal_matrix(n, d1, 1.0, &mut rng.stream("instance/x"))?;
    let y = normal_matrix(n, d2, 1.0, &mut rng.stream("instance/y"))?;
    Ok(Instance {
        adapter,
        w0,
        data: Dataset { x, y },
    })
}

/// Draws `d1, d2 ∈ [1, 16]`, `r ∈ [1, 4]`, and a mixer cycling through all
/// kinds (butterfly only for even `r`). Every other instance uses `alpha = 2r`.
pub fn random_config(seed: u64) -> AdapterConfig {
    let mut s = Rng::new(seed).stream("instance/dims");
    let (d1, d2, r) = (
        draw_dim(&mut s, 16),
        draw_dim(&mut s, 16),
        draw_dim(&mut s, 4),
    );
    let mixer = match seed % 4 {
        0 => MixerKind::FixedIdentity,
        1 if r % 2 == 0 => MixerKind::FixedButterfly,
        1 | 2 => MixerKind::FixedOrthogonal,
        _ => MixerKind::Learnable(InitKind::KaimingUniform),
    };
    let alpha = if seed.is_multiple_of(2) {
        0.0
    } else {
        2.0 * r as f64
    };
    AdapterConfig::new(d1, d2, r, mixer)
        .with_alpha(alpha)
        .with_seed(seed)
}

/// Random `(A, W, B, Δ)` for the one-step trajectory checks: `A`
/// Kaiming-uniform, `B` and `Δ` standard normal, `W` drawn with `mixer_init`.
pub fn random_trajectory_inputs(
    seed: u64,
    mixer_init: InitKind,
) -> Result<(Matrix, Matrix, Matrix, Matrix)> {
    let rng = Rng::new(seed);
    let mut dims = rng.stream("trajectory/dims");
    let (d1, d2, r) = (
        draw_dim(&mut dims, 16),
        draw_dim(&mut dims, 16),
        draw_dim(&mut dims, 4),
    );
    let a = init_matrix(
        InitKind::KaimingUniform,
        d1,
        r,
        &mut rng.stream("trajectory/A"),
    )?;
    let w = init_matrix(mixer_init, r, r, &mut rng.stream("trajectory/W"))?;
    let b = normal_matrix(r, d2, 1.0, &mut rng.stream("trajectory/B"))?;
    let delta = normal_matrix(d1, d2, 1.0, &mut rng.stream("trajectory/delta"))?;
    Ok((a, w, b, delta))
}

fn bits(m: &Matrix) -> Vec<u64> {
    m.data().iter().map(|v| v.to_bits()).collect()
}

pub struct VerifySuite {
    grad_fn: GradFn,
}

impl Default for VerifySuite {
    fn default() -> Self {
        Self {
            grad_fn: Adapter::grad,
        }
    }
}

impl VerifySuite {
    pub fn with_grad_fn(grad_fn: GradFn) -> Self {
        Self { grad_fn }
    }

    /// Runs every group, or only `filter` when given.
    pub fn run(&self, filter: Option<&str>) -> Result<Vec<PropertyResult>> {
        if let Some(f) = filter {
            if !GROUPS.contains(&f) {
                return Err(Error::Parse(format!(
                    "unknown property group {f:?}; expected one of {}",
                    GROUPS.join(", ")
                )));
            }
        }
        let mut out = Vec::new();
        for group in GROUPS {
            if filter.is_some_and(|f| f != group) {
                continue;
            }
            match group {
                "gradient" => {
                    out.push(self.gradient_fd()?);
                    out.push(self.gradient_zero_init()?);
                }
                "stagnation" => out.push(zero_init_training()?),
                "mixer" => {
                    out.push(identity_mixer_exact()?);
                    out.push(butterfly_matches_ts_mixing()?);
                    out.push(rank1_counts()?);
                    out.push(rank1_reconstruction()?);
                }
                "trajectory" => {
                    out.push(trajectory_closed_form()?);
                    out.push(trajectory_fixed_orthogonal()?);
                    out.push(trajectory_generic_inequivalence()?);
                }
                "merge" => {
                    out.push(merge_matches_forward()?);
                    out.push(merge_through_bytes()?);
                }
                "params" => out.push(param_counts()),
                "persistence" => out.push(checkpoint_roundtrip()?),
                _ => unreachable!(),
            }
        }
        Ok(out)
    }

    fn gradient_fd(&self) -> Result<PropertyResult> {
        let mut worst = 0.0_f64;
        for seed in 0..120 {
            let inst = random_instance(random_config(seed), 6)?;
            let (x, y) = (&inst.data.x, &inst.data.y);
            let (_, delta) = mse_loss_and_upstream(&inst.adapter, &inst.w0, x, y)?;
            let analytic = (self.grad_fn)(&inst.adapter, &delta)?;
            let numeric = finite_diff_grads(&inst.adapter, &inst.w0, x, y, DEFAULT_FD_STEP)?;
            worst = worst.max(analytic.relative_error(&numeric)?);
        }
        Ok(PropertyResult {
            group: "gradient",
            name: "analytic-vs-central-difference",
            passed: worst <= GRADIENT_REL_TOL,
            max_error: worst,
            tolerance: GRADIENT_REL_TOL,
        })
    }

    fn gradient_zero_init(&self) -> Result<PropertyResult> {
        let mut worst = 0.0_f64;
        for seed in 0..20 {
            let mut cfg = random_config(seed);
            cfg.mixer = MixerKind::Learnable(InitKind::Zeros);
            let adapter = Adapter::new(cfg.clone())?;
            let delta = normal_matrix(
                cfg.d1,
                cfg.d2,
                1.0,
                &mut Rng::new(seed).stream("zero/delta"),
            )?;
            worst = worst.max((self.grad_fn)(&adapter, &delta)?.max_abs());
        }
        Ok(PropertyResult {
            group: "gradient",
            name: "zero-mixer-zero-b-gives-zero-gradients",
            passed: worst == 0.0,
            max_error: worst,
            tolerance: 0.0,
        })
    }
}

pub fn all_passed(results: &[PropertyResult]) -> bool {
    results.iter().all(|r| r.passed)
}

fn zero_init_training() -> Result<PropertyResult> {
    let mut failures = 0usize;
    for seed in 0..5 {
        let mut cfg = random_config(seed);
        cfg.mixer = MixerKind::Learnable(InitKind::Zeros);
        let inst = random_instance(cfg.clone(), 8)?;
        let start = Adapter::new(cfg)?;
        let log = train(&start, &inst.w0, &inst.data, &TrainConfig::new(0.05, 100))?;
        let constant = log
            .records
            .windows(2)
            .all(|w| w[0].loss.to_bits() == w[1].loss.to_bits());
        let unchanged = bits(log.final_adapter.a()) == bits(start.a())
            && bits(log.final_adapter.w()) == bits(start.w())
            && bits(log.final_adapter.b()) == bits(start.b());
        if !(constant && unchanged && log.records.len() == 101) {
            failures += 1;
        }
    }
    Ok(PropertyResult {
        group: "stagnation",
        name: "zero-init-never-moves",
        passed: failures == 0,
        max_error: failures as f64,
        tolerance: 0.0,
    })
}

fn identity_mixer_exact() -> Result<PropertyResult> {
    let mut failures = 0usize;
    for seed in 0..200 {
        let mut cfg = random_config(seed);
        cfg.mixer = MixerKind::FixedIdentity;
        let s = cfg.scaling();
        let inst = random_instance(cfg, 4)?;
        let ad = &inst.adapter;
        let lora_delta = ad.a().matmul(ad.b())?.scale(s)?;
        let x = &inst.data.x;
        let lora_forward = x
            .matmul(&inst.w0)?
            .add(&x.matmul(ad.a())?.matmul(ad.b())?.scale(s)?)?;
        if ad.delta_weight()? != lora_delta || ad.forward(&inst.w0, x)? != lora_forward {
            failures += 1;
        }
    }
    Ok(PropertyResult {
        group: "mixer",
        name: "identity-mixer-equals-lora",
        passed: failures == 0,
        max_error: failures as f64,
        tolerance: 0.0,
    })
}

fn butterfly_matches_ts_mixing() -> Result<PropertyResult> {
    let mut worst = 0.0_f64;
    for seed in 0..1000 {
        let mut cfg = random_config(seed);
        cfg.rank = 2 * (1 + (seed as usize % 4));
        cfg.mixer = MixerKind::FixedButterfly;
        let s = cfg.scaling();
        let inst = random_instance(cfg, 1)?;
        let ts = ts_mix_delta(&inst.adapter.decompose_two_subspaces()?)?.scale(s)?;
        worst = worst.max(ts.max_abs_diff(&inst.adapter.delta_weight()?)?);
    }
    Ok(PropertyResult {
        group: "mixer",
        name: "butterfly-mixer-equals-ts-mixing",
        passed: worst <= EXACT_TOL,
        max_error: worst,
        tolerance: EXACT_TOL,
    })
}

fn rank1_counts() -> Result<PropertyResult> {
    let mut failures = 0usize;
    for r in 1..=8usize {
        for seed in 0..3 {
            let count = |mixer| -> Result<usize> {
                Ok(
                    Adapter::new(AdapterConfig::new(10, 9, r, mixer).with_seed(seed))?
                        .rank1_expand()
                        .len(),
                )
            };
            failures += usize::from(count(MixerKind::FixedIdentity)? != r);
            failures +=
                usize::from(count(MixerKind::Learnable(InitKind::KaimingUniform))? != r * r);
            if r % 2 == 0 {
                failures += usize::from(count(MixerKind::FixedButterfly)? != 2 * r);
            }
        }
    }
    Ok(PropertyResult {
        group: "mixer",
        name: "rank1-term-counts-r-2r-r2",
        passed: failures == 0,
        max_error: failures as f64,
        tolerance: 0.0,
    })
}

fn rank1_reconstruction() -> Result<PropertyResult> {
    let mut worst = 0.0_f64;
    for seed in 0..200 {
        let inst = random_instance(random_config(seed), 1)?;
        let ad = &inst.adapter;
        let rebuilt = ad.rank1_reconstruct(&ad.rank1_expand())?;
        let direct = ad.a().matmul(ad.w())?.matmul(ad.b())?;
        worst = worst.max(rebuilt.max_abs_diff(&direct)?);
    }
    Ok(PropertyResult {
        group: "mixer",
        name: "rank1-terms-reconstruct-awb",
        passed: worst <= EXACT_TOL,
        max_error: worst,
        tolerance: EXACT_TOL,
    })
}

fn trajectory_closed_form() -> Result<PropertyResult> {
    let mut worst = 0.0_f64;
    for seed in 0..100 {
        let (a, w, b, delta) = random_trajectory_inputs(seed, InitKind::KaimingUniform)?;
        let rep = one_step_trajectory(&a, &w, &b, &delta, 0.1)?;
        worst = worst.max(
            rep.diff_learnable_vs_merged
                .max_abs_diff(&rep.diff_closed_form)?,
        );
    }
    Ok(PropertyResult {
        group: "trajectory",
        name: "merged-minus-learnable-equals-closed-form",
        passed: worst <= EXACT_TOL,
        max_error: worst,
        tolerance: EXACT_TOL,
    })
}

fn trajectory_fixed_orthogonal() -> Result<PropertyResult> {
    let mut worst = 0.0_f64;
    for seed in 0..100 {
        let (a, w, b, delta) = random_trajectory_inputs(seed, InitKind::Orthogonal)?;
        let rep = one_step_trajectory(&a, &w, &b, &delta, 0.1)?;
        worst = worst.max(rep.fixed_orth_checked()?.max_abs_diff(&rep.w_hat)?);
    }
    Ok(PropertyResult {
        group: "trajectory",
        name: "fixed-orthogonal-equals-merged",
        passed: worst <= EXACT_TOL,
        max_error: worst,
        tolerance: EXACT_TOL,
    })
}

fn trajectory_generic_inequivalence() -> Result<PropertyResult> {
    let mut separated = 0usize;
    for seed in 0..100 {
        let (a, w, b, delta) = random_trajectory_inputs(seed, InitKind::KaimingUniform)?;
        let rep = one_step_trajectory(&a, &w, &b, &delta, 0.1)?;
        if rep.diff_learnable_vs_merged.max_abs() > INEQUIVALENCE_GAP {
            separated += 1;
        }
    }
    Ok(PropertyResult {
        group: "trajectory",
        name: "learnable-mixer-differs-from-merged",
        passed: separated >= 99,
        max_error: (100 - separated) as f64,
        tolerance: 1.0,
    })
}

fn merge_matches_forward() -> Result<PropertyResult> {
    let mut worst = 0.0_f64;
    for seed in 0..200 {
        let inst = random_instance(random_config(seed), 5)?;
        let x = &inst.data.x;
        let via_merge = x.matmul(&inst.adapter.merge(&inst.w0)?)?;
        worst = worst.max(
            inst.adapter
                .forward(&inst.w0, x)?
                .max_abs_diff(&via_merge)?,
        );
    }
    Ok(PropertyResult {
        group: "merge",
        name: "forward-equals-merged-product",
        passed: worst <= MERGE_TOL,
        max_error: worst,
        tolerance: MERGE_TOL,
    })
}

fn merge_through_bytes() -> Result<PropertyResult> {
    let mut failures = 0usize;
    let label = Path::new("<memory>");
    for seed in 0..50 {
        let inst = random_instance(random_config(seed), 1)?;
        let adapter = decode_checkpoint(&encode_checkpoint(&inst.adapter)?, label)?;
        let base = decode_matrix(&encode_matrix(&inst.w0)?, label)?;
        if bits(&adapter.merge(&base)?) != bits(&inst.adapter.merge(&inst.w0)?) {
            failures += 1;
        }
    }
    Ok(PropertyResult {
        group: "merge",
        name: "serialized-merge-is-bit-identical",
        passed: failures == 0,
        max_error: failures as f64,
        tolerance: 0.0,
    })
}

fn param_counts() -> PropertyResult {
    let mut failures = 0usize;
    for (d1, d2, r) in [(8, 8, 2), (16, 4, 3), (4096, 4096, 16)] {
        let fixed = AdapterConfig::new(d1, d2, r, MixerKind::FixedIdentity).param_count();
        let learn = AdapterConfig::new(d1, d2, r, MixerKind::Learnable(InitKind::KaimingUniform))
            .param_count();
        failures += usize::from(fixed != (d1 + d2) * r);
        failures += usize::from(learn != (d1 + d2 + r) * r);
        failures += usize::from(learn - fixed != r * r);
    }
    PropertyResult {
        group: "params",
        name: "fixed-and-learnable-counts",
        passed: failures == 0,
        max_error: failures as f64,
        tolerance: 0.0,
    }
}

fn checkpoint_roundtrip() -> Result<PropertyResult> {
    let mut failures = 0usize;
    let label = Path::new("<memory>");
    for seed in 0..40 {
        let mut cfg = random_config(seed);
        if seed % 5 == 4 {
            cfg.mixer = MixerKind::Learnable(InitKind::ALL[(seed / 5) as usize % 5]);
        }
        let ad = random_instance(cfg, 1)?.adapter;
        let back = decode_checkpoint(&encode_checkpoint(&ad)?, label)?;
        let same_config = {
            let (a, b) = (ad.config(), back.config());
            (a.d1, a.d2, a.rank, a.mixer, a.alpha.to_bits())
                == (b.d1, b.d2, b.rank, b.mixer, b.alpha.to_bits())
        };
        let same_factors = bits(ad.a()) == bits(back.a())
            && bits(ad.w()) == bits(back.w())
            && bits(ad.b()) == bits(back.b());
        if !(same_config && same_factors) {
            failures += 1;
        }
    }
    Ok(PropertyResult {
        group: "persistence",
        name: "checkpoint-roundtrip-bit-exact",
        passed: failures == 0,
        max_error: failures as f64,
        tolerance: 0.0,
    })
}
