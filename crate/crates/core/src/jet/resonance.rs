use num_complex::Complex64;
use serde::Serialize;

/// Near-resonances `⟨k, λ⟩ ≈ 0` over the lattice diamond `0 < |k|₁ ≤ K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonanceReport {
    pub lambda: Vec<Complex64>,
    pub max_order: usize,
    pub tolerance: f64,
    /// Ordered by `|k|₁`, then lexicographically.
    pub resonances: Vec<Vec<i64>>,
}

impl ResonanceReport {
    pub fn is_empty(&self) -> bool {
        self.resonances.is_empty()
    }
}

/// Every integer vector with `|k|₁ = m`, lexicographically ascending.
pub(crate) fn lattice_shell(n: usize, m: i64) -> Vec<Vec<i64>> {
    fn rec(prefix: &mut Vec<i64>, left: usize, budget: i64, exact: bool, out: &mut Vec<Vec<i64>>) {
        if left == 0 {
            if !exact || budget == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        if left == 1 {
            let mut vals = vec![-budget, budget];
            vals.dedup();
            for v in vals {
                prefix.push(v);
                out.push(prefix.clone());
                prefix.pop();
            }
            return;
        }
        for v in -budget..=budget {
            prefix.push(v);
            rec(prefix, left - 1, budget - v.abs(), exact, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), n, m, true, &mut out);
    out
}

/// Scans for `k ∈ ℤⁿ`, `0 < |k|₁ ≤ max_order`, with `|⟨k, λ⟩| < tolerance`.
///
/// The tolerance is absolute; use something like `1e-10 · max|λ|`.
pub fn resonance_scan(lambda: &[Complex64], max_order: usize, tolerance: f64) -> ResonanceReport {
    let n = lambda.len();
    let mut resonances = Vec::new();
    for m in 1..=max_order as i64 {
        for k in lattice_shell(n, m) {
            let s: Complex64 = k
                .iter()
                .zip(lambda)
                .map(|(&ki, &l)| l * ki as f64)
                .sum();
            if s.norm() < tolerance {
                resonances.push(k);
            }
        }
    }
    ResonanceReport {
        lambda: lambda.to_vec(),
        max_order,
        tolerance,
        resonances,
    }
}
