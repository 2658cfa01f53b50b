//! Multiresolution structure attached to a low-pass filter and a cycle:
//! the scaling function φ̂ as an infinite product over backward paths, the
//! harmonic function h_C computed two independent ways, the correlation
//! and scaling identities, the shift isometry S₀ with its purity decay
//! diagnostics, and the multiplicity function.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::endo::{
    apply_n, circle_dist, fiber_count_after, preimages, Cycle, DynamicalSystem, Point, SftSystem,
};
use crate::error::{EndoError, Result};
use crate::exact::{rat_from, rat_int, rat_to_f64, ExactComplex, RadicalSum};
use crate::linalg::{solve_unique, GaussRat};
use crate::measure::InvariantMeasure;
use crate::observable::Observable;
use crate::ruelle::{
    apply_ruelle, find_w_cycles, harmonic_space, low_pass_residual, qmf_residual,
    weight_from_filter, Filter,
};
use crate::solenoid::{enumerate_paths, SolenoidPath};

/// Value of the scaling-function product at one path, with its exactness
/// certificate.
#[derive(Clone, Debug)]
pub struct ScalingEvaluation {
    pub re: f64,
    pub im: f64,
    /// present iff every factor was evaluated in closed form and the
    /// product terminated
    pub exact: Option<ExactComplex>,
    /// zero when exact
    pub tail_bound: f64,
}

impl ScalingEvaluation {
    fn exact(v: ExactComplex) -> ScalingEvaluation {
        let (re, im) = v.to_f64();
        ScalingEvaluation { re, im, exact: Some(v), tail_bound: 0.0 }
    }

    pub fn abs_sqr(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

/// Every statement below assumes the mean-one quadrature condition; a
/// filter that fails it is refused outright.
pub fn require_qmf(sys: &DynamicalSystem, filter: &Filter) -> Result<()> {
    let r = qmf_residual(sys, filter)?;
    if r != 0.0 {
        return Err(EndoError::InvalidFilter(format!(
            "filter fails the mean-one quadrature condition (residual {r:.3e})"
        )));
    }
    Ok(())
}

fn require_low_pass(sys: &DynamicalSystem, filter: &Filter, cycle: &Cycle) -> Result<()> {
    let r = low_pass_residual(sys, filter, cycle)?;
    if r > 1e-12 {
        return Err(EndoError::InvalidFilter(format!(
            "filter is not low-pass on the cycle (residual {r:.3e}); \
             the scaling product need not converge"
        )));
    }
    Ok(())
}

/// φ̂(ω) = ∏_{k≥1} α⁻¹_{i(ω)+k} m₀(z_k)/√𝔠(z_k).
///
/// For cylinder filters of depth d the factors equal 1 exactly once z_k
/// lies in the depth-max(d,2) cylinder of the cycle, so the product
/// terminates. On the circle the factors are truncated once z_k is within
/// rounding distance of the cycle, with a Lipschitz tail bound.
pub fn eval_scaling(
    sys: &DynamicalSystem,
    cycle: &Cycle,
    filter: &Filter,
    omega: &SolenoidPath,
) -> Result<ScalingEvaluation> {
    require_qmf(sys, filter)?;
    require_low_pass(sys, filter, cycle)?;
    let p = cycle.len();
    let m = omega.labels.len();
    match sys {
        DynamicalSystem::Sft(_) => {
            let d = filter.m0.depth().unwrap_or(1).max(2);
            let stop = m + d + p;
            let mut acc = ExactComplex::one();
            for k in 1..=stop {
                let z = omega.point_at(sys, cycle, k as i64)?;
                let v = filter.m0.eval(&z)?;
                if v.is_zero() {
                    return Ok(ScalingEvaluation::exact(ExactComplex::zero()));
                }
                let c = fiber_count_after(sys, &z)? as i64;
                let factor = filter
                    .phase((omega.align + k) % p)
                    .conj()
                    .mul(&v)
                    .mul_radical(&RadicalSum::sqrt_rat(&rat_from(1, c)));
                acc = acc.mul(&factor);
            }
            Ok(ScalingEvaluation::exact(acc))
        }
        DynamicalSystem::Torus(t) => {
            let n = t.degree as f64;
            let lip = filter.m0.trig_lipschitz();
            let steps = m + 1 + (52.0 / n.log2()).ceil() as usize;
            let mut exact: Option<ExactComplex> = Some(ExactComplex::one());
            let mut re = 1.0f64;
            let mut im = 0.0f64;
            let mut rounding = 0.0f64;
            for k in 1..=steps {
                let z = omega.point_at(sys, cycle, k as i64)?;
                // once a tail point lands on the cycle it stays there and
                // every remaining factor is exactly 1 by the low-pass
                // identity
                if k > m && &z == cycle.point((omega.align + k) % p) {
                    return Ok(match exact {
                        Some(v) => ScalingEvaluation::exact(v),
                        None => ScalingEvaluation { re, im, exact: None, tail_bound: rounding },
                    });
                }
                let alpha_inv = filter.phase((omega.align + k) % p).conj();
                let inv_sqrt_n = RadicalSum::sqrt_rat(&rat_from(1, t.degree as i64));
                let exact_factor = if exact.is_some() { filter.m0.eval(&z).ok() } else { None };
                match exact_factor {
                    Some(v) => {
                        if v.is_zero() {
                            return Ok(ScalingEvaluation::exact(ExactComplex::zero()));
                        }
                        let next =
                            exact.unwrap().mul(&alpha_inv.mul(&v).mul_radical(&inv_sqrt_n));
                        let (r, i) = next.to_f64();
                        re = r;
                        im = i;
                        exact = Some(next);
                    }
                    None => {
                        if let Some(acc) = exact.take() {
                            let (r, i) = acc.to_f64();
                            re = r;
                            im = i;
                        }
                        let xf = rat_to_f64(z.as_angle().unwrap());
                        let (mr, mi) = filter.m0.eval_angle_f64(xf);
                        let (ar, ai) = alpha_inv.to_f64();
                        let (fr, fi) = (mr * ar - mi * ai, mr * ai + mi * ar);
                        let (fr, fi) = (fr / n.sqrt(), fi / n.sqrt());
                        let (nr, ni) = (re * fr - im * fi, re * fi + im * fr);
                        re = nr;
                        im = ni;
                        rounding += 1e-15 * (1.0 + lip);
                    }
                }
            }
            // Lipschitz tail: the remaining factors differ from 1 by at
            // most L·dist/√N, and the distance contracts by 1/N per step
            let z_last = omega.point_at(sys, cycle, steps as i64)?;
            let dist = rat_to_f64(&circle_dist(
                z_last.as_angle().unwrap(),
                cycle.point((omega.align + steps) % p).as_angle().unwrap(),
            ));
            let eps_sum = lip / n.sqrt() * dist / (n - 1.0);
            let mag = (re * re + im * im).sqrt();
            let tail = mag * (eps_sum.exp() - 1.0) + rounding;
            match exact {
                // the exact product did not terminate, so its closed form
                // is only a truncation; report it as a float with a bound
                Some(v) => {
                    let (r, i) = v.to_f64();
                    Ok(ScalingEvaluation { re: r, im: i, exact: None, tail_bound: tail })
                }
                None => Ok(ScalingEvaluation { re, im, exact: None, tail_bound: tail }),
            }
        }
    }
}

/// How to compute the harmonic function h_C.
#[derive(Clone, Copy, Debug)]
pub enum HcMethod {
    /// Σ_ω |φ̂(x,ω)|² over canonical prefixes up to m_max
    PathSum { m_max: usize },
    /// fixed point of the transfer operator, pinned on the cycles
    FixedPoint { depth: usize },
}

#[derive(Clone, Debug)]
pub struct HarmonicFunction {
    pub obs: Observable,
    pub tail_bound: f64,
}

const W_CYCLE_PMAX: usize = 6;
const W_CYCLE_TOL: f64 = 1e-9;

/// P_x(N_C(x)) as an observable, by path summation (shifts only; exact,
/// with tail 1 − accounted mass) or as the pinned transfer fixed point
/// (both systems, exact).
pub fn compute_h_c(
    sys: &DynamicalSystem,
    cycle: &Cycle,
    filter: &Filter,
    method: HcMethod,
) -> Result<HarmonicFunction> {
    require_qmf(sys, filter)?;
    require_low_pass(sys, filter, cycle)?;
    match method {
        HcMethod::PathSum { m_max } => match sys {
            DynamicalSystem::Sft(s) => {
                let d = filter.m0.depth().unwrap_or(2).saturating_sub(1).max(1);
                let mut table = BTreeMap::new();
                let mut tail = 0.0f64;
                for w in s.admissible_words(d) {
                    let x = complete_word(s, &w);
                    let mut acc = RadicalSum::zero();
                    for omega in enumerate_paths(sys, cycle, &x, m_max)? {
                        let v = eval_scaling(sys, cycle, filter, &omega)?;
                        let ev = v
                            .exact
                            .ok_or_else(|| EndoError::Numerical("expected exact product".into()))?;
                        acc = acc.add(&ev.norm_sqr());
                    }
                    let missing = RadicalSum::one().sub(&acc);
                    tail = tail.max(missing.to_f64().max(0.0));
                    table.insert(w, ExactComplex::real(acc));
                }
                Ok(HarmonicFunction { obs: Observable::cylinder(s, d, table)?, tail_bound: tail })
            }
            DynamicalSystem::Torus(_) => Err(EndoError::Unsupported(
                "path summation on the circle is pointwise; use h_c_path_sum_at".into(),
            )),
        },
        HcMethod::FixedPoint { depth } => {
            let w = weight_from_filter(sys, filter)?;
            let basis = harmonic_space(sys, &w, depth)?;
            if basis.is_empty() {
                return Err(EndoError::Numerical(
                    "transfer operator has no fixed vector at this depth".into(),
                ));
            }
            let cycles = find_w_cycles(sys, &w, W_CYCLE_PMAX.max(cycle.len()), W_CYCLE_TOL)?;
            if !cycles.iter().any(|d| d.points() == cycle.points()) {
                return Err(EndoError::InvalidFilter(
                    "the requested cycle does not carry unit weight".into(),
                ));
            }
            if cycles.len() != basis.len() {
                return Err(EndoError::Numerical(format!(
                    "cannot pin the fixed vector: {} unit-weight cycles vs {} fixed directions",
                    cycles.len(),
                    basis.len()
                )));
            }
            // pin by the cycle sums: Σ_{x∈D} h(x) is |C| on the chosen
            // cycle and 0 on every other unit-weight cycle (these sums are
            // Gaussian-rational even when individual values are not)
            let mut matrix = Vec::new();
            let mut rhs = Vec::new();
            for d in &cycles {
                let mut row = Vec::new();
                for b in &basis {
                    let mut s = ExactComplex::zero();
                    for i in 0..d.len() {
                        s = s.add(&b.eval(d.point(i))?);
                    }
                    let (re, im) = s.as_gauss().ok_or_else(|| {
                        EndoError::Numerical("cycle sum of a fixed vector is not rational".into())
                    })?;
                    row.push(GaussRat::new(re, im));
                }
                matrix.push(row);
                rhs.push(if d.points() == cycle.points() {
                    GaussRat::real(rat_int(d.len() as i64))
                } else {
                    GaussRat::zero()
                });
            }
            let coeffs = solve_unique(&matrix, &rhs)?;
            let mut h = Observable::constant(sys, ExactComplex::zero());
            for (b, c) in basis.iter().zip(&coeffs) {
                let cc = ExactComplex::from_rat(c.re.clone())
                    .add(&ExactComplex::i().scale(&c.im));
                h = h.add(sys, &b.scale(&cc))?;
            }
            Ok(HarmonicFunction { obs: h, tail_bound: 0.0 })
        }
    }
}

/// Complete an admissible word to a concrete eventually periodic point by
/// greedily appending least letters.
fn complete_word(s: &SftSystem, w: &[usize]) -> Point {
    let succ = |a: usize| (0..s.alphabet.size()).find(|&b| s.admissible(a, b)).unwrap();
    let mut chain = vec![*w.last().unwrap()];
    loop {
        let next = succ(*chain.last().unwrap());
        if let Some(pos) = chain.iter().position(|&c| c == next) {
            let prefix: Vec<usize> = w[..w.len() - 1]
                .iter()
                .chain(chain[..pos].iter())
                .cloned()
                .collect();
            return Point::word(s, &prefix, &chain[pos..]).unwrap();
        }
        chain.push(next);
    }
}

/// Pointwise path sum Σ_{prefix ≤ m_max} |φ̂(x,ω)|² with a tail bound;
/// the workhorse for circle systems where the sum is not locally constant.
pub fn h_c_path_sum_at(
    sys: &DynamicalSystem,
    cycle: &Cycle,
    filter: &Filter,
    x: &Point,
    m_max: usize,
) -> Result<(f64, f64)> {
    require_qmf(sys, filter)?;
    require_low_pass(sys, filter, cycle)?;
    match sys {
        DynamicalSystem::Sft(_) => {
            let mut acc = 0.0;
            for omega in enumerate_paths(sys, cycle, x, m_max)? {
                acc += eval_scaling(sys, cycle, filter, &omega)?.abs_sqr();
            }
            Ok((acc, (1.0 - acc).max(0.0)))
        }
        DynamicalSystem::Torus(t) => {
            let xf = rat_to_f64(x.as_angle().unwrap());
            let (partial, pruned) =
                torus_partial_mass(sys, t.degree, cycle, filter, xf, m_max, 1e-12);
            Ok((partial, (1.0 - partial).max(0.0) + pruned))
        }
    }
}

/// P_x-mass that has joined the cycle within m_max branch steps, via a
/// pruned depth-first walk over branch words. Backward iteration contracts,
/// so plain f64 is numerically stable here. Returns (mass, pruned mass).
fn torus_partial_mass(
    sys: &DynamicalSystem,
    degree: u32,
    cycle: &Cycle,
    filter: &Filter,
    x: f64,
    m_max: usize,
    prune: f64,
) -> (f64, f64) {
    let n = degree as f64;
    let p = cycle.len();
    let w_at = |z: f64| {
        let (re, im) = filter.m0.eval_angle_f64(z);
        (re * re + im * im) / n
    };
    // The fixed point 0 has two digit expansions (all 0s and all N−1s), so
    // backward orbits can approach it from below with the non-forced tail;
    // that family carries part of the mass and must be counted too.
    let dual_tail = cycle.len() == 1 && *cycle.point(0) == Point::angle(rat_int(0));
    // forced-tail product from depth m with the given alignment, plus the
    // approach-from-below family when it exists
    let tail_product = |z0: f64, align: usize| {
        let mut t = 1.0;
        let mut z = z0;
        for k in 0..120 {
            let j = cycle.tail_label(sys, align, (m_max + k) as i64) as f64;
            z = (z + j) / n;
            t *= w_at(z);
            if t == 0.0 {
                break;
            }
        }
        if dual_tail {
            let mut tb = 1.0;
            let mut z = z0;
            for _ in 0..120 {
                z = (z + (n - 1.0)) / n;
                tb *= w_at(z);
                if tb == 0.0 {
                    break;
                }
            }
            t += tb;
        }
        t
    };
    let mut partial = 0.0;
    let mut pruned = 0.0;
    for align in 0..p {
        // stack of (depth, point, accumulated mass)
        let mut stack = vec![(0usize, x, 1.0f64)];
        while let Some((depth, z, mass)) = stack.pop() {
            if mass < prune {
                pruned += mass;
                continue;
            }
            if depth == m_max {
                partial += mass * tail_product(z, align);
                continue;
            }
            for j in 0..degree as usize {
                let z2 = (z + j as f64) / n;
                stack.push((depth + 1, z2, mass * w_at(z2)));
            }
        }
    }
    (partial, pruned)
}

/// Partial path mass on a uniform grid: the forced-tail products are
/// evaluated pointwise, then the branch recursion
/// g_{k+1}(x) = Σ_j W((x+j)/N)·g_k((x+j)/N) is iterated on the grid with
/// linear interpolation (one copy per cycle alignment). Each step is an
/// average with total weight 1, so interpolation error does not pile up.
fn torus_partial_mass_grid(
    degree: u32,
    cycle: &Cycle,
    filter: &Filter,
    grid: usize,
    m_max: usize,
) -> Vec<f64> {
    let n = degree as f64;
    let p = cycle.len();
    let w_at = |z: f64| {
        let (re, im) = filter.m0.eval_angle_f64(z);
        (re * re + im * im) / n
    };
    // digit moving cycle index c to c + 1 under prepending
    let digit: Vec<f64> = (0..p)
        .map(|c| {
            let xc = rat_to_f64(cycle.point(c).as_angle().unwrap());
            let xn = rat_to_f64(cycle.point((c + 1) % p).as_angle().unwrap());
            (xn * n - xc).round()
        })
        .collect();
    let dual_tail = cycle.len() == 1 && *cycle.point(0) == Point::angle(rat_int(0));
    let tail_at = |c0: usize, z0: f64| {
        let mut t = 1.0;
        let mut z = z0;
        let mut c = c0;
        for _ in 0..60 * p {
            z = (z + digit[c]) / n;
            z -= z.floor();
            t *= w_at(z);
            c = (c + 1) % p;
            if t == 0.0 {
                break;
            }
        }
        // the fixed point 0 can also be approached from below, along the
        // all-(N−1)s digit expansion
        if dual_tail {
            let mut tb = 1.0;
            let mut z = z0;
            for _ in 0..60 {
                z = (z + (n - 1.0)) / n;
                tb *= w_at(z);
                if tb == 0.0 {
                    break;
                }
            }
            t += tb;
        }
        t
    };
    let mut g: Vec<Vec<f64>> = (0..p)
        .map(|c| (0..grid).map(|i| tail_at(c, i as f64 / grid as f64)).collect())
        .collect();
    let interp = |v: &[f64], x: f64| {
        let t = x.rem_euclid(1.0) * grid as f64;
        let i = (t.floor() as usize) % grid;
        let frac = t - t.floor();
        v[i] * (1.0 - frac) + v[(i + 1) % grid] * frac
    };
    for _ in 0..m_max {
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(p);
        for c in 0..p {
            let upper = &g[(c + 1) % p];
            let row = (0..grid)
                .map(|i| {
                    let x = i as f64 / grid as f64;
                    (0..degree as u64)
                        .map(|j| {
                            let z = (x + j as f64) / n;
                            w_at(z) * interp(upper, z)
                        })
                        .sum::<f64>()
                })
                .collect();
            next.push(row);
        }
        g = next;
    }
    (0..grid).map(|i| (0..p).map(|c| g[c][i]).sum()).collect()
}

/// Largest disagreement between the two h_C routes over the given points,
/// which must stay within the path-sum tail bound.
pub fn h_c_cross_check(
    sys: &DynamicalSystem,
    cycle: &Cycle,
    filter: &Filter,
    m_max: usize,
    depth: usize,
    points: &[Point],
) -> Result<f64> {
    let fixed = compute_h_c(sys, cycle, filter, HcMethod::FixedPoint { depth })?;
    let mut worst = 0.0f64;
    for x in points {
        let (ps, tail) = h_c_path_sum_at(sys, cycle, filter, x, m_max)?;
        let fp = match fixed.obs.eval(x) {
            Ok(v) => v.to_f64().0,
            Err(EndoError::Unsupported(_)) => fixed.obs.eval_f64(x)?.0,
            Err(e) => return Err(e),
        };
        let diff = (fp - ps).abs();
        if diff > tail + 1e-9 {
            return Err(EndoError::Numerical(format!(
                "harmonic function routes disagree at a point: fixed-point {fp}, \
                 path sum {ps}, tail bound {tail}"
            )));
        }
        worst = worst.max(diff);
    }
    Ok(worst)
}

/// |⟨π(f)φ̂, φ̂⟩ − ∫ f·h_C dρ| together with the tail bound that the
/// residual must not exceed. The left side integrates the truncated path
/// sum; the right side uses the pinned fixed point.
pub fn correlation_residual(
    sys: &DynamicalSystem,
    rho: &InvariantMeasure,
    cycle: &Cycle,
    filter: &Filter,
    f: &Observable,
    m_max: usize,
) -> Result<(f64, f64)> {
    require_qmf(sys, filter)?;
    require_low_pass(sys, filter, cycle)?;
    match sys {
        DynamicalSystem::Sft(_) => {
            let d = filter.m0.depth().unwrap_or(2).max(2);
            let partial = compute_h_c(sys, cycle, filter, HcMethod::PathSum { m_max })?;
            let fixed = compute_h_c(sys, cycle, filter, HcMethod::FixedPoint { depth: d })?;
            let lhs = rho.integrate(&f.mul(sys, &partial.obs)?)?;
            let rhs = rho.integrate(&f.mul(sys, &fixed.obs)?)?;
            let residual = lhs.sub(&rhs).abs_f64();
            let bound = f.sup_abs_upper() * partial.tail_bound;
            Ok((residual, bound))
        }
        DynamicalSystem::Torus(t) => {
            let w = weight_from_filter(sys, filter)?;
            let fixed =
                compute_h_c(sys, cycle, filter, HcMethod::FixedPoint { depth: trig_band(&w) + 1 })?;
            let rhs = rho.integrate(&f.mul(sys, &fixed.obs)?)?.to_f64();
            let grid = 1 << 12;
            let partial = torus_partial_mass_grid(t.degree, cycle, filter, grid, m_max);
            let mut lhs = (0.0, 0.0);
            let mut tail_avg = 0.0;
            for (j, &p) in partial.iter().enumerate() {
                let x = j as f64 / grid as f64;
                let (fr, fi) = f.eval_angle_f64(x);
                lhs.0 += fr * p;
                lhs.1 += fi * p;
                tail_avg += (1.0 - p).max(0.0);
            }
            lhs.0 /= grid as f64;
            lhs.1 /= grid as f64;
            tail_avg /= grid as f64;
            let residual = ((lhs.0 - rhs.0).powi(2) + (lhs.1 - rhs.1).powi(2)).sqrt();
            let sup_f = f.sup_abs_upper();
            // quadrature and interpolation slack for smooth integrands on
            // this grid
            let bound = sup_f * tail_avg + sup_f * 1e-5;
            Ok((residual, bound))
        }
    }
}

fn trig_band(f: &Observable) -> usize {
    match f {
        Observable::Trig { coeffs } => coeffs.keys().map(|m| m.unsigned_abs() as usize).max()
            .unwrap_or(0),
        Observable::Cylinder { depth, .. } => *depth,
    }
}

/// max over the sampled paths of |(Uφ̂)(ω) − m₀(z₀)·φ̂(ω)|, evaluating the
/// shifted product independently on both sides.
pub fn scaling_relation_residual(
    sys: &DynamicalSystem,
    cycle: &Cycle,
    filter: &Filter,
    paths: &[SolenoidPath],
) -> Result<f64> {
    require_qmf(sys, filter)?;
    require_low_pass(sys, filter, cycle)?;
    let mut worst = 0.0f64;
    for omega in paths {
        let shifted = omega.rhat(sys, cycle)?;
        let left_eval = eval_scaling(sys, cycle, filter, &shifted)?;
        let right_eval = eval_scaling(sys, cycle, filter, omega)?;
        let alpha = filter.phase(omega.align % cycle.len());
        let c = fiber_count_after(sys, &omega.base)?;
        let m0x = filter.m0.eval(&omega.base);
        if let (Some(l), Some(r), Ok(m)) = (&left_eval.exact, &right_eval.exact, &m0x) {
            let lhs = alpha.mul(l).mul_radical(&RadicalSum::sqrt_int(c as u64));
            let rhs = m.mul(r);
            let diff = lhs.sub(&rhs);
            if !diff.is_zero() {
                worst = worst.max(diff.abs_f64());
            }
            continue;
        }
        let s = (c as f64).sqrt();
        let (ar, ai) = alpha.to_f64();
        let lhs = (
            (ar * left_eval.re - ai * left_eval.im) * s,
            (ar * left_eval.im + ai * left_eval.re) * s,
        );
        let (mr, mi) = match m0x {
            Ok(v) => v.to_f64(),
            Err(_) => filter.m0.eval_f64(&omega.base)?,
        };
        let rhs = (
            mr * right_eval.re - mi * right_eval.im,
            mr * right_eval.im + mi * right_eval.re,
        );
        let d = ((lhs.0 - rhs.0).powi(2) + (lhs.1 - rhs.1).powi(2)).sqrt();
        let slack = s * left_eval.tail_bound + (mr * mr + mi * mi).sqrt() * right_eval.tail_bound;
        worst = worst.max((d - slack).max(0.0));
    }
    Ok(worst)
}

/// S₀f = m₀·(f∘r).
pub fn s0_apply(sys: &DynamicalSystem, filter: &Filter, f: &Observable) -> Result<Observable> {
    require_qmf(sys, filter)?;
    filter.m0.mul(sys, &f.compose_with_r(sys)?)
}

/// |⟨S₀f, S₀g⟩_{h dρ} − ⟨f, g⟩_{h dρ}|, exact on cylinder and trig
/// classes. The density h must satisfy the harmonicity identity.
pub fn s0_isometry_residual(
    sys: &DynamicalSystem,
    rho: &InvariantMeasure,
    filter: &Filter,
    h: &Observable,
    f: &Observable,
    g: &Observable,
) -> Result<f64> {
    require_qmf(sys, filter)?;
    let w = weight_from_filter(sys, filter)?;
    if !apply_ruelle(sys, &w, h)?.sub(sys, h)?.is_zero() {
        return Err(EndoError::InvalidMeasure(
            "density is not harmonic for the filter's transfer operator".into(),
        ));
    }
    let s0f = s0_apply(sys, filter, f)?;
    let s0g = s0_apply(sys, filter, g)?;
    let lhs = rho.integrate(&s0f.mul(sys, &s0g.conj())?.mul(sys, h)?)?;
    let rhs = rho.integrate(&f.mul(sys, &g.conj())?.mul(sys, h)?)?;
    Ok(lhs.sub(&rhs).abs_f64())
}

/// The per-step norms s_k = |m₀^{(k)}(x)|²·E_k(|ξ|²)(x) maximized over a
/// seeded sample, with the fitted geometric rate.
#[derive(Clone, Debug)]
pub struct PurityReport {
    pub s: Vec<f64>,
    pub k_min: usize,
    pub k_max: usize,
    pub fitted_rate: Option<f64>,
    pub hypothesis_violated: bool,
}

/// Trace the would-be norm of a function ξ lying in every S₀^k range; its
/// decay toward zero certifies a purely non-deterministic shift part. The
/// density is fixed at h ≡ 1 (non-constant densities are not supported).
pub fn purity_decay(
    sys: &DynamicalSystem,
    rho: &InvariantMeasure,
    filter: &Filter,
    h: Option<&Observable>,
    xi: &Observable,
    k_max: usize,
    samples: usize,
    seed: u64,
) -> Result<PurityReport> {
    require_qmf(sys, filter)?;
    if let Some(h) = h {
        let one = Observable::constant(sys, ExactComplex::one());
        if !h.sub(sys, &one)?.is_zero() {
            return Err(EndoError::Unsupported(
                "purity diagnostics are implemented for the unit density only".into(),
            ));
        }
    }
    let m0_sq = filter.m0.modulus_sqr(sys)?;
    let one = Observable::constant(sys, ExactComplex::one());
    if m0_sq.sub(sys, &one)?.is_zero() {
        return Ok(PurityReport {
            s: Vec::new(),
            k_min: 1,
            k_max,
            fitted_rate: None,
            hypothesis_violated: true,
        });
    }
    let w = weight_from_filter(sys, filter)?;
    let xi_sq = xi.modulus_sqr(sys)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = k_max + trig_band(&filter.m0) + 24;
    let points: Vec<Point> = rho
        .sample_points(&mut rng, samples.max(1) * 4, depth)
        .into_iter()
        .filter(|x| obs_abs_at(&xi_sq, x).map(|v| v > 0.0).unwrap_or(false))
        .take(samples.max(1))
        .collect();
    if points.is_empty() {
        return Err(EndoError::Numerical(
            "no sample points landed in the support of the test function".into(),
        ));
    }
    let mut s = Vec::with_capacity(k_max);
    let mut ek = xi_sq.clone();
    for k in 1..=k_max {
        ek = apply_ruelle(sys, &w, &ek)?;
        let mut sup = 0.0f64;
        for x in &points {
            let mut m2 = 1.0f64;
            for j in 0..k {
                let y = apply_n(sys, x, j)?;
                m2 *= obs_abs_at(&m0_sq, &y)?;
                if m2 == 0.0 {
                    break;
                }
            }
            let e = if m2 == 0.0 {
                0.0
            } else {
                obs_abs_at(&ek, &apply_n(sys, x, k)?)?
            };
            sup = sup.max(m2 * e);
        }
        s.push(sup);
    }
    // least-squares slope of ln s_k over the positive entries
    let pts: Vec<(f64, f64)> = s
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(i, v)| ((i + 1) as f64, v.ln()))
        .collect();
    let fitted_rate = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        Some(((n * sxy - sx * sy) / (n * sxx - sx * sx)).exp())
    } else {
        None
    };
    Ok(PurityReport { s, k_min: 1, k_max, fitted_rate, hypothesis_violated: false })
}

fn obs_abs_at(f: &Observable, x: &Point) -> Result<f64> {
    match f.eval(x) {
        Ok(v) => Ok(v.abs_f64()),
        Err(EndoError::Unsupported(_)) => {
            let (re, im) = f.eval_f64(x)?;
            Ok((re * re + im * im).sqrt())
        }
        Err(e) => Err(e),
    }
}

/// Number of n-step preimages of x on which h_C does not vanish, returned
/// as a certification interval [lower, upper] (equal when every value is
/// certified).
pub fn multiplicity(
    sys: &DynamicalSystem,
    cycle: &Cycle,
    filter: &Filter,
    x: &Point,
    n: usize,
) -> Result<(usize, usize)> {
    let depth = match sys {
        DynamicalSystem::Sft(_) => filter.m0.depth().unwrap_or(2).max(2),
        DynamicalSystem::Torus(_) => trig_band(&weight_from_filter(sys, filter)?) + 1,
    };
    let h = compute_h_c(sys, cycle, filter, HcMethod::FixedPoint { depth })?;
    let mut layer = vec![x.clone()];
    for _ in 0..n {
        let mut next = Vec::new();
        for y in &layer {
            next.extend(preimages(sys, y)?);
        }
        layer = next;
    }
    let mut lower = 0usize;
    let mut upper = 0usize;
    for y in &layer {
        match h.obs.eval(y) {
            Ok(v) => {
                if !v.is_zero() {
                    lower += 1;
                    upper += 1;
                }
            }
            Err(EndoError::Unsupported(_)) => {
                let (re, im) = h.obs.eval_f64(y)?;
                let mag = (re * re + im * im).sqrt();
                if mag > 1e-9 {
                    lower += 1;
                    upper += 1;
                } else if mag > 1e-13 {
                    upper += 1; // sign not certified
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok((lower, upper))
}
