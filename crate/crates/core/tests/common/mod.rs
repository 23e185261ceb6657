//! Reference implementations for integration tests. Plain nested `Vec`s and
//! textbook loops, independent of the library's matrix code.
#![allow(dead_code, clippy::needless_range_loop)]

use moslora::{Adapter, AdapterConfig, InitKind, Matrix, MixerKind, Rng};

pub type Dense = Vec<Vec<f64>>;

pub fn dense(m: &Matrix) -> Dense {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn mm(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    assert_eq!(a[0].len(), k);
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i][p] * b[p][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

pub fn tr(a: &Dense) -> Dense {
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j]).collect())
        .collect()
}

pub fn zip(a: &Dense, b: &Dense, f: impl Fn(f64, f64) -> f64) -> Dense {
    assert_eq!((a.len(), a[0].len()), (b.len(), b[0].len()));
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| f(*x, *y)).collect())
        .collect()
}

pub fn add(a: &Dense, b: &Dense) -> Dense {
    zip(a, b, |x, y| x + y)
}

pub fn sub(a: &Dense, b: &Dense) -> Dense {
    zip(a, b, |x, y| x - y)
}

pub fn scale(a: &Dense, s: f64) -> Dense {
    a.iter()
        .map(|r| r.iter().map(|v| v * s).collect())
        .collect()
}

pub fn eye(n: usize) -> Dense {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn max_abs(a: &Dense) -> f64 {
    a.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    max_abs(&sub(a, b))
}

pub fn cols(a: &Dense, lo: usize, hi: usize) -> Dense {
    a.iter().map(|r| r[lo..hi].to_vec()).collect()
}

pub fn rows(a: &Dense, lo: usize, hi: usize) -> Dense {
    a[lo..hi].to_vec()
}

/// Inputs of a regression problem for one adapter.
pub struct Problem {
    pub x: Dense,
    pub y: Dense,
    pub w0: Dense,
    pub s: f64,
    pub a: Dense,
    pub w: Dense,
    pub b: Dense,
}

impl Problem {
    pub fn from_adapter(adapter: &Adapter, w0: &Matrix, x: &Matrix, y: &Matrix) -> Self {
        Problem {
            x: dense(x),
            y: dense(y),
            w0: dense(w0),
            s: adapter.scaling(),
            a: dense(adapter.a()),
            w: dense(adapter.w()),
            b: dense(adapter.b()),
        }
    }

    pub fn prediction(&self) -> Dense {
        let branch = scale(&mm(&mm(&mm(&self.x, &self.a), &self.w), &self.b), self.s);
        add(&mm(&self.x, &self.w0), &branch)
    }

    /// `‖ŷ - y‖² / (n·d2)`.
    pub fn loss(&self) -> f64 {
        let r = sub(&self.prediction(), &self.y);
        let count = (r.len() * r[0].len()) as f64;
        r.iter().flatten().map(|v| v * v).sum::<f64>() / count
    }

    /// Derivative of [`Problem::loss`] with respect to the merged weight.
    pub fn upstream(&self) -> Dense {
        let r = sub(&self.prediction(), &self.y);
        let count = (r.len() * r[0].len()) as f64;
        scale(&mm(&tr(&self.x), &r), 2.0 / count)
    }

    fn factor_mut(&mut self, which: usize) -> &mut Dense {
        match which {
            0 => &mut self.a,
            1 => &mut self.w,
            _ => &mut self.b,
        }
    }

    /// Central differences over every entry of `A`, `W` and `B`.
    pub fn central_differences(&self, h: f64) -> (Dense, Dense, Dense) {
        let mut p = Problem {
            x: self.x.clone(),
            y: self.y.clone(),
            w0: self.w0.clone(),
            s: self.s,
            a: self.a.clone(),
            w: self.w.clone(),
            b: self.b.clone(),
        };
        let mut grads = Vec::new();
        for which in 0..3 {
            let (n, m) = (p.factor_mut(which).len(), p.factor_mut(which)[0].len());
            let mut g = vec![vec![0.0; m]; n];
            for i in 0..n {
                for j in 0..m {
                    let orig = p.factor_mut(which)[i][j];
                    p.factor_mut(which)[i][j] = orig + h;
                    let plus = p.loss();
                    p.factor_mut(which)[i][j] = orig - h;
                    let minus = p.loss();
                    p.factor_mut(which)[i][j] = orig;
                    g[i][j] = (plus - minus) / (2.0 * h);
                }
            }
            grads.push(g);
        }
        let b = grads.pop().unwrap();
        let w = grads.pop().unwrap();
        let a = grads.pop().unwrap();
        (a, w, b)
    }
}

pub fn gaussian(rows: usize, cols: usize, std: f64, seed: u64, label: &str) -> Matrix {
    let mut s = Rng::new(seed).stream(label);
    Matrix::from_fn(rows, cols, |_, _| s.normal(std)).unwrap()
}

/// Dimensions `d1, d2 ∈ [1, 16]`, `r ∈ [1, 4]` drawn from `seed`.
pub fn dims(seed: u64) -> (usize, usize, usize) {
    let mut s = Rng::new(seed).stream("test/dims");
    let mut pick = |max: usize| 1 + (s.uniform(0.0, max as f64) as usize).min(max - 1);
    (pick(16), pick(16), pick(4))
}

/// Cycles through every mixer kind; butterfly falls back to orthogonal for odd `r`.
pub fn mixer_for(seed: u64, r: usize) -> MixerKind {
    match seed % 8 {
        0 => MixerKind::FixedIdentity,
        1 if r.is_multiple_of(2) => MixerKind::FixedButterfly,
        1 | 2 => MixerKind::FixedOrthogonal,
        k => MixerKind::Learnable(InitKind::ALL[(k as usize - 3) % 5]),
    }
}

/// Adapter with the given mixer, nonzero `B ~ N(0, 1)`, and (for learnable
/// mixers) a random `W ~ N(0, 1)` so that zero or identity inits are not
/// special cases.
pub fn random_adapter(
    d1: usize,
    d2: usize,
    r: usize,
    mixer: MixerKind,
    alpha: f64,
    seed: u64,
) -> Adapter {
    let ad = Adapter::new(
        AdapterConfig::new(d1, d2, r, mixer)
            .with_alpha(alpha)
            .with_seed(seed),
    )
    .unwrap();
    let b = gaussian(r, d2, 1.0, seed, "test/B");
    let w = if mixer.is_learnable() {
        gaussian(r, r, 1.0, seed, "test/W")
    } else {
        ad.w().clone()
    };
    ad.with_factors(ad.a().clone(), w, b).unwrap()
}
