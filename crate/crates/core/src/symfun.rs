//! Symmetric operator families over Gårding-type cones.
//!
//! Every base family is normalized so that `f(1, …, 1) = 1` and is
//! homogeneous of degree one:
//!
//! * Monge-Ampère: `(λ_1 ⋯ λ_n)^{1/n}` on `Γ_n`,
//! * Hessian `k`: `(σ_k(λ) / C(n, k))^{1/k}` on `Γ_k`,
//! * p-Monge-Ampère: `(∏_I λ_I)^{1/C(n, p)}` over all `p`-subsets `I`, on the
//!   cone where every `λ_I` is positive.
//!
//! Positive combinations live on the intersection of the member cones.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::sampling::ConeSampler;
use crate::{Error, Result};

/// Relative tolerance below which a cone functional counts as "on the boundary".
pub const BOUNDARY_TOLERANCE: f64 = 1e-10;

/// Number of rays used when an operator's structural constant has no closed form.
pub const DEFAULT_GAMMA_SAMPLES: usize = 4096;

const GAMMA_SEED: u64 = 0x05ee_d0f9_a44a;

/// Unordered eigenvalue tuple of the relative endomorphism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EigenTuple(Vec<f64>);

impl EigenTuple {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::UnsupportedDimension(values.len()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("non-finite eigenvalue {bad}")));
        }
        Ok(Self(values))
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self(self.0.iter().map(|v| v * t).collect())
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self(perm.iter().map(|&i| self.0[i]).collect())
    }
}

impl TryFrom<Vec<f64>> for EigenTuple {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EigenTuple> for Vec<f64> {
    fn from(t: EigenTuple) -> Self {
        t.0
    }
}

/// All elementary symmetric polynomials `σ_0 = 1, σ_1, …, σ_n`.
pub fn elementary_symmetric(values: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; values.len() + 1];
    e[0] = 1.0;
    for (count, &x) in values.iter().enumerate() {
        for j in (1..=count + 1).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

/// `σ_j(λ)` for `1 ≤ j ≤ n`.
pub fn sigma(lambda: &EigenTuple, j: usize) -> Result<f64> {
    let n = lambda.n();
    if j == 0 || j > n {
        return Err(Error::Argument(format!("sigma index {j} outside 1..={n}")));
    }
    Ok(elementary_symmetric(lambda.values())[j])
}

fn sigma_without(values: &[f64], skip: usize, j: usize) -> f64 {
    let rest: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .map(|(_, &v)| v)
        .collect();
    elementary_symmetric(&rest)[j]
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Bitmasks of all `p`-element subsets of `{0, …, n-1}` in increasing order.
pub fn index_subsets(n: usize, p: usize) -> Vec<u32> {
    (0u32..(1u32 << n))
        .filter(|m| m.count_ones() as usize == p)
        .collect()
}

fn subset_sum(values: &[f64], mask: u32) -> f64 {
    values
        .iter()
        .enumerate()
        .filter(|&(i, _)| mask & (1 << i) != 0)
        .map(|(_, v)| v)
        .sum()
}

fn subset_label(mask: u32, n: usize) -> String {
    let idx: Vec<String> = (0..n)
        .filter(|i| mask & (1 << i) != 0)
        .map(|i| (i + 1).to_string())
        .collect();
    idx.join(",")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConeSpec {
    GammaK(usize),
    PIndexCone(usize),
    Intersection(Vec<ConeSpec>),
}

impl ConeSpec {
    /// Named cone functionals; membership means all of them are positive.
    pub fn functionals(&self, lambda: &EigenTuple) -> Result<Vec<(String, f64)>> {
        let n = lambda.n();
        let mut out = Vec::new();
        match self {
            ConeSpec::GammaK(k) => {
                if *k == 0 || *k > n {
                    return Err(Error::DimensionMismatch { expected: n, got: *k });
                }
                let e = elementary_symmetric(lambda.values());
                for (j, value) in e.iter().enumerate().take(k + 1).skip(1) {
                    out.push((format!("sigma_{j}"), *value));
                }
            }
            ConeSpec::PIndexCone(p) => {
                if *p == 0 || *p > n {
                    return Err(Error::DimensionMismatch { expected: n, got: *p });
                }
                for mask in index_subsets(n, *p) {
                    out.push((
                        format!("lambda_{{{}}}", subset_label(mask, n)),
                        subset_sum(lambda.values(), mask),
                    ));
                }
            }
            ConeSpec::Intersection(members) => {
                for m in members {
                    out.extend(m.functionals(lambda)?);
                }
            }
        }
        Ok(out)
    }

    pub fn contains(&self, lambda: &EigenTuple) -> Result<bool> {
        Ok(self.functionals(lambda)?.iter().all(|(_, v)| *v > 0.0))
    }

    /// Errors with the first failing cone test.
    pub fn check(&self, lambda: &EigenTuple) -> Result<()> {
        for (test, value) in self.functionals(lambda)? {
            if !(value > 0.0) {
                return Err(Error::ConeViolation {
                    cone: self.to_string(),
                    test: format!("{test} = {value:.6e}"),
                    point: None,
                });
            }
        }
        Ok(())
    }

    /// Like [`check`](Self::check) but also rejects points within the boundary tolerance.
    pub fn check_interior(&self, lambda: &EigenTuple) -> Result<()> {
        self.check(lambda)?;
        let threshold = BOUNDARY_TOLERANCE * (1.0 + lambda.norm());
        for (test, value) in self.functionals(lambda)? {
            if value <= threshold {
                return Err(Error::DegeneratePoint {
                    cone: self.to_string(),
                    test: format!("{test} = {value:.6e}"),
                });
            }
        }
        Ok(())
    }

    /// Flattens nested intersections and keeps only the strongest `Γ_k`.
    pub fn simplified(&self) -> ConeSpec {
        let mut flat = Vec::new();
        self.flatten_into(&mut flat);
        let max_k = flat
            .iter()
            .filter_map(|c| match c {
                ConeSpec::GammaK(k) => Some(*k),
                _ => None,
            })
            .max();
        let mut p_cones: Vec<usize> = flat
            .iter()
            .filter_map(|c| match c {
                ConeSpec::PIndexCone(p) => Some(*p),
                _ => None,
            })
            .collect();
        p_cones.sort_unstable();
        p_cones.dedup();
        let mut members: Vec<ConeSpec> = max_k.into_iter().map(ConeSpec::GammaK).collect();
        members.extend(p_cones.into_iter().map(ConeSpec::PIndexCone));
        if members.len() == 1 {
            members.pop().unwrap()
        } else {
            ConeSpec::Intersection(members)
        }
    }

    fn flatten_into(&self, out: &mut Vec<ConeSpec>) {
        match self {
            ConeSpec::Intersection(members) => members.iter().for_each(|m| m.flatten_into(out)),
            other => out.push(other.clone()),
        }
    }
}

impl fmt::Display for ConeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConeSpec::GammaK(k) => write!(f, "Gamma_{k}"),
            ConeSpec::PIndexCone(p) => write!(f, "P_{p}"),
            ConeSpec::Intersection(members) => {
                let parts: Vec<String> = members.iter().map(|m| m.to_string()).collect();
                write!(f, "({})", parts.join(" & "))
            }
        }
    }
}

pub fn in_cone(lambda: &EigenTuple, cone: &ConeSpec) -> Result<bool> {
    cone.contains(lambda)
}

/// Structural constant with provenance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaBound {
    pub value: f64,
    /// `true` when the value follows from an identity rather than sampling.
    pub certified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Family {
    MongeAmpere,
    Hessian(usize),
    PMongeAmpere(usize),
    Combination(Vec<(f64, OperatorSpec)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    n: usize,
    family: Family,
    cone: ConeSpec,
    gamma: GammaBound,
}

impl OperatorSpec {
    pub fn monge_ampere(n: usize) -> Result<Self> {
        check_dimension(n)?;
        Self::with_gamma(n, Family::MongeAmpere, ConeSpec::GammaK(n))
    }

    pub fn hessian(n: usize, k: usize) -> Result<Self> {
        check_dimension(n)?;
        if k == 0 || k > n {
            return Err(Error::Argument(format!("Hessian order {k} outside 1..={n}")));
        }
        Self::with_gamma(n, Family::Hessian(k), ConeSpec::GammaK(k))
    }

    pub fn p_monge_ampere(n: usize, p: usize) -> Result<Self> {
        check_dimension(n)?;
        if p == 0 || p > n {
            return Err(Error::Argument(format!("p-Monge-Ampère order {p} outside 1..={n}")));
        }
        Self::with_gamma(n, Family::PMongeAmpere(p), ConeSpec::PIndexCone(p))
    }

    fn with_gamma(n: usize, family: Family, cone: ConeSpec) -> Result<Self> {
        let mut spec = Self {
            n,
            family,
            cone,
            gamma: GammaBound {
                value: f64::NAN,
                certified: false,
            },
        };
        spec.gamma = gamma_lower_bound(&spec, DEFAULT_GAMMA_SAMPLES)?;
        Ok(spec)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn cone(&self) -> &ConeSpec {
        &self.cone
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.value
    }

    pub fn gamma_bound(&self) -> GammaBound {
        self.gamma
    }

    fn check_len(&self, lambda: &EigenTuple) -> Result<()> {
        if lambda.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: lambda.n(),
            });
        }
        Ok(())
    }

    /// `f(λ)`; errors outside the cone.
    pub fn eval(&self, lambda: &EigenTuple) -> Result<f64> {
        self.check_len(lambda)?;
        self.cone.check(lambda)?;
        Ok(self.eval_unchecked(lambda.values()))
    }

    fn eval_unchecked(&self, l: &[f64]) -> f64 {
        let n = l.len();
        match &self.family {
            Family::MongeAmpere => (l.iter().map(|v| v.ln()).sum::<f64>() / n as f64).exp(),
            Family::Hessian(k) => {
                let s = elementary_symmetric(l)[*k] / binomial(n, *k) as f64;
                s.powf(1.0 / *k as f64)
            }
            Family::PMongeAmpere(p) => {
                let masks = index_subsets(n, *p);
                let m = masks.len() as f64;
                (masks.iter().map(|&mk| subset_sum(l, mk).ln()).sum::<f64>() / m).exp()
            }
            Family::Combination(terms) => terms.iter().map(|(w, s)| w * s.eval_unchecked(l)).sum(),
        }
    }

    /// `(∂f/∂λ_1, …, ∂f/∂λ_n)`; errors on or outside the cone boundary.
    pub fn grad(&self, lambda: &EigenTuple) -> Result<Vec<f64>> {
        Ok(self.eval_grad(lambda)?.1)
    }

    /// `f` and its gradient in one pass.
    pub fn eval_grad(&self, lambda: &EigenTuple) -> Result<(f64, Vec<f64>)> {
        self.check_len(lambda)?;
        self.cone.check_interior(lambda)?;
        Ok(self.eval_grad_unchecked(lambda.values()))
    }

    fn eval_grad_unchecked(&self, l: &[f64]) -> (f64, Vec<f64>) {
        let n = l.len();
        match &self.family {
            Family::MongeAmpere => {
                let f = self.eval_unchecked(l);
                (f, l.iter().map(|v| f / (n as f64 * v)).collect())
            }
            Family::Hessian(k) => {
                let f = self.eval_unchecked(l);
                let sk = elementary_symmetric(l)[*k];
                let grad = (0..n)
                    .map(|j| f * sigma_without(l, j, k - 1) / (*k as f64 * sk))
                    .collect();
                (f, grad)
            }
            Family::PMongeAmpere(p) => {
                let f = self.eval_unchecked(l);
                let masks = index_subsets(n, *p);
                let m = masks.len() as f64;
                let mut grad = vec![0.0; n];
                for &mk in &masks {
                    let inv = 1.0 / subset_sum(l, mk);
                    for (j, g) in grad.iter_mut().enumerate() {
                        if mk & (1 << j) != 0 {
                            *g += inv;
                        }
                    }
                }
                grad.iter_mut().for_each(|g| *g *= f / m);
                (f, grad)
            }
            Family::Combination(terms) => {
                let mut f = 0.0;
                let mut grad = vec![0.0; n];
                for (w, spec) in terms {
                    let (fi, gi) = spec.eval_grad_unchecked(l);
                    f += w * fi;
                    grad.iter_mut().zip(gi).for_each(|(g, gij)| *g += w * gij);
                }
                (f, grad)
            }
        }
    }

    /// Shortest textual descriptor, e.g. `combo(1*ma, 0.5*hessian(1))`.
    pub fn descriptor(&self) -> OperatorDescriptor {
        match &self.family {
            Family::MongeAmpere => OperatorDescriptor::MongeAmpere,
            Family::Hessian(k) => OperatorDescriptor::Hessian(*k),
            Family::PMongeAmpere(p) => OperatorDescriptor::PMongeAmpere(*p),
            Family::Combination(terms) => OperatorDescriptor::Combination(
                terms.iter().map(|(w, s)| (*w, s.descriptor())).collect(),
            ),
        }
    }
}

fn check_dimension(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    Ok(())
}

pub fn eval_f(spec: &OperatorSpec, lambda: &EigenTuple) -> Result<f64> {
    spec.eval(lambda)
}

pub fn grad_f(spec: &OperatorSpec, lambda: &EigenTuple) -> Result<Vec<f64>> {
    spec.grad(lambda)
}

/// `∏_j ∂f/∂λ_j`, the quantity bounded below by `γ`.
pub fn gradient_product(spec: &OperatorSpec, lambda: &EigenTuple) -> Result<f64> {
    Ok(spec.grad(lambda)?.iter().product())
}

/// Lower bound for `∏_j ∂f/∂λ_j` over the cone.
///
/// Monge-Ampère, `Hessian(1)` and `Hessian(n)` have the exact value `n^{-n}`.
/// Combinations use `max_i w_i^n γ_i`. Remaining families are sampled along
/// `sample_count` rays (the product is homogeneous of degree zero) and the
/// smallest value is refined by a shrinking local search.
pub fn gamma_lower_bound(spec: &OperatorSpec, sample_count: usize) -> Result<GammaBound> {
    if sample_count == 0 {
        return Err(Error::Argument("sample_count must be at least 1".into()));
    }
    let n = spec.n;
    let exact = (n as f64).powi(-(n as i32));
    match &spec.family {
        Family::MongeAmpere => Ok(GammaBound {
            value: exact,
            certified: true,
        }),
        Family::Hessian(k) if *k == 1 || *k == n => Ok(GammaBound {
            value: exact,
            certified: true,
        }),
        Family::Combination(terms) => {
            let best = terms
                .iter()
                .map(|(w, s)| (w.powi(n as i32) * s.gamma.value, s.gamma.certified))
                .fold((0.0, false), |acc, x| if x.0 > acc.0 { x } else { acc });
            Ok(GammaBound {
                value: best.0,
                certified: best.1,
            })
        }
        _ => Ok(GammaBound {
            value: sampled_gamma(spec, sample_count)?,
            certified: false,
        }),
    }
}

fn sampled_gamma(spec: &OperatorSpec, sample_count: usize) -> Result<f64> {
    let mut sampler = ConeSampler::new(spec.cone.clone(), spec.n, GAMMA_SEED);
    let product = |l: &[f64]| -> Option<f64> {
        let lambda = EigenTuple::new(l.to_vec()).ok()?;
        spec.cone.check_interior(&lambda).ok()?;
        Some(spec.eval_grad_unchecked(l).1.iter().product())
    };
    let mut best_point = Vec::new();
    let mut best = f64::INFINITY;
    for _ in 0..sample_count {
        let lambda = sampler.sample()?;
        if let Some(v) = product(lambda.values()) {
            if v < best {
                best = v;
                best_point = lambda.values().to_vec();
            }
        }
    }
    // Shrinking coordinate search from the best sample.
    let mut step = 0.25 * best_point.iter().map(|v| v.abs()).fold(0.0, f64::max);
    while step > 1e-9 {
        let mut improved = false;
        for j in 0..spec.n {
            for sign in [1.0, -1.0] {
                let mut trial = best_point.clone();
                trial[j] += sign * step;
                if let Some(v) = product(&trial) {
                    if v < best {
                        best = v;
                        best_point = trial;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(best)
}

/// Positive combination `Σ w_i f_i` on the intersection of the member cones.
pub fn combine(specs: &[OperatorSpec], weights: &[f64]) -> Result<OperatorSpec> {
    if specs.is_empty() || specs.len() != weights.len() {
        return Err(Error::Argument(format!(
            "combine needs equal nonempty lists, got {} specs and {} weights",
            specs.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::Argument(format!("nonpositive weight {w}")));
    }
    let n = specs[0].n;
    if let Some(s) = specs.iter().find(|s| s.n != n) {
        return Err(Error::DimensionMismatch { expected: n, got: s.n });
    }
    let cone = ConeSpec::Intersection(specs.iter().map(|s| s.cone.clone()).collect()).simplified();
    let mut spec = OperatorSpec {
        n,
        family: Family::Combination(weights.iter().copied().zip(specs.iter().cloned()).collect()),
        cone,
        gamma: GammaBound {
            value: f64::NAN,
            certified: false,
        },
    };
    spec.gamma = gamma_lower_bound(&spec, 1)?;
    Ok(spec)
}

/// Dimension-free operator description with a small text grammar:
///
/// ```text
/// op   := "ma" | "hessian(" k ")" | "pma(" p ")" | "combo(" term ("," term)* ")"
/// term := weight "*" op
/// ```
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorDescriptor {
    MongeAmpere,
    Hessian(usize),
    PMongeAmpere(usize),
    Combination(Vec<(f64, OperatorDescriptor)>),
}

impl OperatorDescriptor {
    pub fn build(&self, n: usize) -> Result<OperatorSpec> {
        match self {
            Self::MongeAmpere => OperatorSpec::monge_ampere(n),
            Self::Hessian(k) => OperatorSpec::hessian(n, *k),
            Self::PMongeAmpere(p) => OperatorSpec::p_monge_ampere(n, *p),
            Self::Combination(terms) => {
                let specs = terms
                    .iter()
                    .map(|(_, d)| d.build(n))
                    .collect::<Result<Vec<_>>>()?;
                let weights: Vec<f64> = terms.iter().map(|(w, _)| *w).collect();
                combine(&specs, &weights)
            }
        }
    }
}

impl fmt::Display for OperatorDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MongeAmpere => write!(f, "ma"),
            Self::Hessian(k) => write!(f, "hessian({k})"),
            Self::PMongeAmpere(p) => write!(f, "pma({p})"),
            Self::Combination(terms) => {
                write!(f, "combo(")?;
                for (i, (w, d)) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{w}*{d}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl FromStr for OperatorDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut parser = DescriptorParser {
            src: compact.as_bytes(),
            pos: 0,
        };
        let op = parser.op()?;
        if parser.pos != parser.src.len() {
            return Err(parser.error("trailing input"));
        }
        Ok(op)
    }
}

struct DescriptorParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl DescriptorParser<'_> {
    fn error(&self, what: &str) -> Error {
        Error::Parse(format!("operator descriptor: {what} at offset {}", self.pos))
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.src[self.pos..].starts_with(token.as_bytes()) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{token}`")))
        }
    }

    fn number(&mut self) -> Result<&str> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || b".eE+-".contains(&self.src[self.pos]))
        {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).map_err(|_| self.error("bad number"))
    }

    fn integer_arg(&mut self) -> Result<usize> {
        self.expect("(")?;
        let v = self.number()?.parse().map_err(|_| self.error("expected integer"))?;
        self.expect(")")?;
        Ok(v)
    }

    fn op(&mut self) -> Result<OperatorDescriptor> {
        if self.eat("combo(") {
            let mut terms = Vec::new();
            loop {
                let w: f64 = self.number()?.parse().map_err(|_| self.error("expected weight"))?;
                self.expect("*")?;
                terms.push((w, self.op()?));
                if !self.eat(",") {
                    break;
                }
            }
            self.expect(")")?;
            Ok(OperatorDescriptor::Combination(terms))
        } else if self.eat("hessian") {
            Ok(OperatorDescriptor::Hessian(self.integer_arg()?))
        } else if self.eat("pma") {
            Ok(OperatorDescriptor::PMongeAmpere(self.integer_arg()?))
        } else if self.eat("ma") {
            Ok(OperatorDescriptor::MongeAmpere)
        } else {
            Err(self.error("unknown operator"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tuple(v: &[f64]) -> EigenTuple {
        EigenTuple::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(&tuple(&[1.0, 1.0, 1.0]), 2).unwrap(), 3.0);
        assert_eq!(sigma(&tuple(&[2.0, 3.0]), 1).unwrap(), 5.0);
        assert_eq!(sigma(&tuple(&[1.0, 2.0, 3.0]), 3).unwrap(), 6.0);
        assert!(matches!(sigma(&tuple(&[1.0, 2.0]), 3), Err(Error::Argument(_))));
        assert!(matches!(sigma(&tuple(&[1.0, 2.0]), 0), Err(Error::Argument(_))));
    }

    #[test]
    fn cone_examples() {
        assert!(in_cone(&tuple(&[1.0, 1.0]), &ConeSpec::GammaK(2)).unwrap());
        let l = tuple(&[-1.0, 3.0]);
        assert!(in_cone(&l, &ConeSpec::GammaK(1)).unwrap());
        assert!(!in_cone(&l, &ConeSpec::GammaK(2)).unwrap());
        // pair sums {2, 2, 6}
        assert!(in_cone(&tuple(&[-1.0, 3.0, 3.0]), &ConeSpec::PIndexCone(2)).unwrap());
        assert!(!in_cone(&tuple(&[-1.0, 0.5, 3.0]), &ConeSpec::PIndexCone(2)).unwrap());
        assert!(matches!(
            in_cone(&tuple(&[1.0, 1.0]), &ConeSpec::GammaK(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn eval_examples() {
        let ma = OperatorSpec::monge_ampere(4).unwrap();
        assert_relative_eq!(ma.eval(&tuple(&[1.0; 4])).unwrap(), 1.0, epsilon = 1e-15);
        let h1 = OperatorSpec::hessian(3, 1).unwrap();
        assert_relative_eq!(h1.eval(&tuple(&[1.0, 2.0, 3.0])).unwrap(), 2.0, epsilon = 1e-14);
        let pma = OperatorSpec::p_monge_ampere(3, 2).unwrap();
        assert_relative_eq!(pma.eval(&tuple(&[1.0, 1.0, 1.0])).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn eval_outside_cone_names_the_test() {
        let ma = OperatorSpec::monge_ampere(2).unwrap();
        match ma.eval(&tuple(&[-1.0, 3.0])) {
            Err(Error::ConeViolation { test, .. }) => assert!(test.starts_with("sigma_2")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grad_examples() {
        let ma = OperatorSpec::monge_ampere(2).unwrap();
        let g = ma.grad(&tuple(&[1.0, 1.0])).unwrap();
        assert_relative_eq!(g[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(g[1], 0.5, epsilon = 1e-15);
        let g = ma.grad(&tuple(&[1.0, 4.0])).unwrap();
        assert_relative_eq!(g[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(g[1], 0.25, epsilon = 1e-14);
        for n in 2..=4 {
            let h1 = OperatorSpec::hessian(n, 1).unwrap();
            let l: Vec<f64> = (0..n).map(|i| i as f64 - 0.4).collect();
            for gj in h1.grad(&tuple(&l)).unwrap() {
                assert_relative_eq!(gj, 1.0 / n as f64, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn grad_rejects_boundary() {
        let ma = OperatorSpec::monge_ampere(2).unwrap();
        assert!(matches!(
            ma.grad(&tuple(&[0.0, 1.0])),
            Err(Error::ConeViolation { .. })
        ));
        assert!(matches!(
            ma.grad(&tuple(&[1e-13, 1.0])),
            Err(Error::DegeneratePoint { .. })
        ));
    }

    #[test]
    fn gamma_closed_forms() {
        let ma = OperatorSpec::monge_ampere(2).unwrap();
        assert_eq!(ma.gamma(), 0.25);
        assert!(ma.gamma_bound().certified);
        let h1 = OperatorSpec::hessian(3, 1).unwrap();
        assert_eq!(h1.gamma(), 1.0 / 27.0);
        let pma = OperatorSpec::p_monge_ampere(3, 2).unwrap();
        assert!(!pma.gamma_bound().certified);
        assert!(pma.gamma() > 0.0);
    }

    #[test]
    fn combination_examples() {
        let ma = OperatorSpec::monge_ampere(2).unwrap();
        let h1 = OperatorSpec::hessian(2, 1).unwrap();
        let c = combine(&[ma.clone(), h1.clone()], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(c.eval(&tuple(&[1.0, 1.0])).unwrap(), 2.0, epsilon = 1e-14);
        assert_eq!(c.cone(), &ConeSpec::GammaK(2));
        assert_eq!(c.gamma(), 0.25);

        let single = combine(std::slice::from_ref(&ma), &[1.0]).unwrap();
        let l = tuple(&[0.3, 2.7]);
        assert_relative_eq!(single.eval(&l).unwrap(), ma.eval(&l).unwrap(), epsilon = 1e-14);

        assert!(matches!(combine(std::slice::from_ref(&ma), &[0.0]), Err(Error::Argument(_))));
        assert!(matches!(combine(&[ma], &[1.0, 2.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn descriptor_grammar() {
        for text in ["ma", "hessian(2)", "pma(2)", "combo(1*ma, 0.5*hessian(1))"] {
            let d: OperatorDescriptor = text.parse().unwrap();
            assert_eq!(d.to_string(), text);
        }
        let d: OperatorDescriptor = "combo( 2 * pma(2) , 1e-1*ma )".parse().unwrap();
        assert_eq!(
            d,
            OperatorDescriptor::Combination(vec![
                (2.0, OperatorDescriptor::PMongeAmpere(2)),
                (0.1, OperatorDescriptor::MongeAmpere)
            ])
        );
        assert!("hessian(x)".parse::<OperatorDescriptor>().is_err());
        assert!("ma extra".parse::<OperatorDescriptor>().is_err());
        assert!("combo(1*ma".parse::<OperatorDescriptor>().is_err());
        let spec = d.build(3).unwrap();
        assert_eq!(spec.descriptor(), d);
    }
}
