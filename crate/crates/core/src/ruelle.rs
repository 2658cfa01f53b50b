//! The transfer operator R_W f(x) = Σ_{r(y)=x} W(y) f(y), quadrature-mirror
//! filters, W-cycles, harmonic eigenspaces, conditional expectations and
//! the ergodic log-mean diagnostics.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::endo::{enumerate_cycles, Cycle, DynamicalSystem, Point};
use crate::error::{EndoError, Result};
use crate::exact::{rat_from, rat_int, rat_to_f64, ExactComplex, RadicalSum};
use crate::linalg::{kernel_basis, GaussRat};
use crate::measure::InvariantMeasure;
use crate::observable::Observable;

/// A candidate quadrature-mirror filter: the function m₀ together with the
/// unimodular phases α_i attached to a chosen cycle.
#[derive(Clone, Debug)]
pub struct Filter {
    pub m0: Observable,
    pub phases: Vec<ExactComplex>,
}

impl Filter {
    pub fn new(m0: Observable, phases: Vec<ExactComplex>) -> Result<Filter> {
        if phases.is_empty() {
            return Err(EndoError::InvalidFilter("at least one phase required".into()));
        }
        for a in &phases {
            if !a.is_unimodular() {
                return Err(EndoError::InvalidFilter(format!(
                    "phase {:?} is not unimodular",
                    a
                )));
            }
        }
        Ok(Filter { m0, phases })
    }

    /// Filter with all phases equal to 1.
    pub fn plain(m0: Observable) -> Filter {
        Filter { m0, phases: vec![ExactComplex::one()] }
    }

    pub fn phase(&self, i: usize) -> &ExactComplex {
        &self.phases[i % self.phases.len()]
    }
}

/// Canonical golden-mean filter: m₀ = √2 on [11], 1 on [12], 0 on [21].
pub fn golden_mean_filter() -> Filter {
    let s = crate::endo::SftSystem::golden_mean();
    let mut table = BTreeMap::new();
    table.insert(vec![0, 0], ExactComplex::real(RadicalSum::sqrt_int(2)));
    table.insert(vec![0, 1], ExactComplex::one());
    table.insert(vec![1, 0], ExactComplex::zero());
    Filter::plain(Observable::cylinder(&s, 2, table).unwrap())
}

/// m₀(z) = (1 + z^k)/√2 on the circle (k = 1 is the classic low-pass
/// filter for the doubling map).
pub fn haar_filter(k: i64) -> Filter {
    let half_sqrt2 = ExactComplex::real(RadicalSum::radical(rat_from(1, 2), 2));
    let mut coeffs = BTreeMap::new();
    coeffs.insert(0, half_sqrt2.clone());
    coeffs.insert(k, half_sqrt2);
    Filter::plain(Observable::trig(coeffs))
}

/// The fiber-count observable 𝔠(x) = #r⁻¹(r(x)): depends on the second
/// letter for shifts, constant N on the circle.
pub fn fiber_count_observable(sys: &DynamicalSystem) -> Observable {
    match sys {
        DynamicalSystem::Sft(s) => {
            let table = s
                .admissible_words(2)
                .into_iter()
                .map(|w| {
                    let c = ExactComplex::from_int(s.col_sum(w[1]) as i64);
                    (w, c)
                })
                .collect();
            Observable::Cylinder { depth: 2, table }
        }
        DynamicalSystem::Torus(t) => {
            Observable::constant(sys, ExactComplex::from_int(t.degree as i64))
        }
    }
}

/// sup |(1/#r⁻¹(x)) Σ_{r(y)=x} |m₀(y)|² − 1|: zero exactly when the filter
/// is quadrature-mirror. Exact for cylinder filters and for vanishing trig
/// defects; otherwise a grid bound with Lipschitz slack.
pub fn qmf_residual(sys: &DynamicalSystem, filter: &Filter) -> Result<f64> {
    let avg = filter.m0.modulus_sqr(sys)?.fiber_average(sys)?;
    let defect = avg.sub(sys, &Observable::constant(sys, ExactComplex::one()))?;
    if defect.is_zero() {
        return Ok(0.0);
    }
    Ok(match defect {
        Observable::Cylinder { .. } => defect.sup_abs(),
        Observable::Trig { .. } => defect.sup_abs_upper(),
    })
}

/// max_i |m₀(x_i) − α_i √𝔠(x_i)| over the cycle.
pub fn low_pass_residual(sys: &DynamicalSystem, filter: &Filter, cycle: &Cycle) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..cycle.len() {
        let x = cycle.point(i);
        let c = crate::endo::fiber_count_after(sys, x)?;
        let target = filter.phase(i).mul_radical(&RadicalSum::sqrt_int(c as u64));
        let d = match filter.m0.eval(x) {
            Ok(v) => v.sub(&target).abs_f64(),
            Err(EndoError::Unsupported(_)) => {
                let (mr, mi) = filter.m0.eval_f64(x)?;
                let (tr, ti) = target.to_f64();
                ((mr - tr).powi(2) + (mi - ti).powi(2)).sqrt()
            }
            Err(e) => return Err(e),
        };
        worst = worst.max(d);
    }
    Ok(worst)
}

/// W = |m₀|²/𝔠 (the convention that makes the scaling identity hold).
/// Checks 0 ≤ W ≤ 1 and reports the violating word/region otherwise.
pub fn weight_from_filter(sys: &DynamicalSystem, filter: &Filter) -> Result<Observable> {
    let msq = filter.m0.modulus_sqr(sys)?;
    let w = match sys {
        DynamicalSystem::Sft(s) => {
            let msq = msq.extend_to_depth(s, msq.depth().unwrap().max(2))?;
            match msq {
                Observable::Cylinder { depth, table } => {
                    let table: BTreeMap<Vec<usize>, ExactComplex> = table
                        .into_iter()
                        .map(|(word, v)| {
                            let c = s.col_sum(word[1]) as i64;
                            let v = v.scale(&rat_from(1, c));
                            (word, v)
                        })
                        .collect();
                    for (word, v) in &table {
                        if !v.im.is_zero()
                            || v.re.is_negative()
                            || RadicalSum::one().sub(&v.re).is_negative()
                        {
                            return Err(EndoError::InvalidFilter(format!(
                                "weight out of [0,1] on cylinder {:?}: {:?}",
                                word, v
                            )));
                        }
                    }
                    Observable::Cylinder { depth, table }
                }
                _ => unreachable!(),
            }
        }
        DynamicalSystem::Torus(t) => {
            let w = msq.scale(&ExactComplex::from_rat(rat_from(1, t.degree as i64)));
            // range check on a grid with modest slack
            let grid = 1 << 12;
            for i in 0..grid {
                let (re, im) = w.eval_angle_f64(i as f64 / grid as f64);
                if im.abs() > 1e-9 || re < -1e-9 || re > 1.0 + 1e-9 {
                    return Err(EndoError::InvalidFilter(format!(
                        "weight out of [0,1] near x = {}/{}: {}",
                        i, grid, re
                    )));
                }
            }
            w
        }
    };
    Ok(w)
}

/// R_W f(x) = Σ_{r(y)=x} W(y) f(y), exact.
pub fn apply_ruelle(sys: &DynamicalSystem, w: &Observable, f: &Observable) -> Result<Observable> {
    let wf = w.mul(sys, f)?;
    let avg = wf.fiber_average(sys)?;
    // fiber_average divides by the fiber size #r⁻¹(x); multiply it back
    avg.mul(sys, &fiber_count_observable_pre(sys))
}

/// #r⁻¹(x) as an observable of x (first-letter column sum for shifts,
/// constant N on the circle).
pub fn fiber_count_observable_pre(sys: &DynamicalSystem) -> Observable {
    match sys {
        DynamicalSystem::Sft(s) => {
            let table = s
                .admissible_words(1)
                .into_iter()
                .map(|w| {
                    let c = ExactComplex::from_int(s.col_sum(w[0]) as i64);
                    (w, c)
                })
                .collect();
            Observable::Cylinder { depth: 1, table }
        }
        DynamicalSystem::Torus(t) => {
            Observable::constant(sys, ExactComplex::from_int(t.degree as i64))
        }
    }
}

/// The uniform averaging weight V(y) = 1/#r⁻¹(r(y)), whose transfer
/// operator is the fiber average.
pub fn uniform_transfer_weight(sys: &DynamicalSystem) -> Observable {
    match sys {
        DynamicalSystem::Sft(s) => {
            let table = s
                .admissible_words(2)
                .into_iter()
                .map(|w| {
                    let v = ExactComplex::from_rat(rat_from(1, s.col_sum(w[1]) as i64));
                    (w, v)
                })
                .collect();
            Observable::Cylinder { depth: 2, table }
        }
        DynamicalSystem::Torus(t) => {
            Observable::constant(sys, ExactComplex::from_rat(rat_from(1, t.degree as i64)))
        }
    }
}

pub fn apply_ruelle_n(
    sys: &DynamicalSystem,
    w: &Observable,
    f: &Observable,
    n: usize,
) -> Result<Observable> {
    let mut g = f.clone();
    for _ in 0..n {
        g = apply_ruelle(sys, w, &g)?;
    }
    Ok(g)
}

fn gauss_of(v: &ExactComplex) -> Result<GaussRat> {
    let (re, im) = v.as_gauss().ok_or_else(|| {
        EndoError::Unsupported("exact eigenspace computation needs rational coefficients".into())
    })?;
    Ok(GaussRat::new(re, im))
}

/// Matrix of R_W on depth-`depth` indicator functions (shift systems):
/// column j holds the expansion of R_W χ_{[w_j]} over the same basis.
pub fn ruelle_matrix(
    sys: &DynamicalSystem,
    w: &Observable,
    depth: usize,
) -> Result<Vec<Vec<GaussRat>>> {
    let s = sys
        .sft()
        .ok_or_else(|| EndoError::Unsupported("ruelle_matrix applies to shift systems".into()))?;
    let words = s.admissible_words(depth);
    let n = words.len();
    let mut m = vec![vec![GaussRat::zero(); n]; n];
    for (j, wj) in words.iter().enumerate() {
        let chi = Observable::indicator(s, wj)?;
        let img = apply_ruelle(sys, w, &chi)?.extend_to_depth(s, depth)?;
        if let Observable::Cylinder { table, .. } = img {
            for (i, wi) in words.iter().enumerate() {
                m[i][j] = gauss_of(&table[wi])?;
            }
        }
    }
    Ok(m)
}

/// Basis of {h : R_W h = h} inside the depth-`depth` cylinder observables
/// (shift systems) or the trig polynomials with frequencies |m| ≤ `depth`
/// (circle maps, truncated). Requires Gaussian-rational weight data.
pub fn harmonic_space(
    sys: &DynamicalSystem,
    w: &Observable,
    depth: usize,
) -> Result<Vec<Observable>> {
    match sys {
        DynamicalSystem::Sft(s) => {
            let words = s.admissible_words(depth);
            let mut m = ruelle_matrix(sys, w, depth)?;
            for i in 0..m.len() {
                m[i][i] = m[i][i].sub(&GaussRat::one());
            }
            let kernel = kernel_basis(&m);
            Ok(kernel
                .into_iter()
                .map(|v| {
                    let table = words
                        .iter()
                        .cloned()
                        .zip(v.iter().map(|g| {
                            ExactComplex::from_rat(g.re.clone())
                                .add(&ExactComplex::i().scale(&g.im))
                        }))
                        .collect();
                    Observable::Cylinder { depth, table }
                })
                .collect())
        }
        DynamicalSystem::Torus(t) => {
            let coeffs = match w {
                Observable::Trig { coeffs } => coeffs,
                _ => {
                    return Err(EndoError::Unsupported(
                        "circle weights must be trig polynomials".into(),
                    ))
                }
            };
            let band = depth as i64;
            let n = t.degree as i64;
            let dim = (2 * band + 1) as usize;
            let idx = |m: i64| (m + band) as usize;
            // R_W e_m = N Σ_{k : N | k+m} w_k e_{(k+m)/N}, truncated to the
            // band (the factor N comes from the sum over the N branches)
            let deg = GaussRat::real(rat_int(n));
            let mut mat = vec![vec![GaussRat::zero(); dim]; dim];
            for m in -band..=band {
                for (&k, c) in coeffs {
                    if (k + m) % n == 0 {
                        let target = (k + m) / n;
                        if target.abs() <= band {
                            let g = gauss_of(c)?.mul(&deg);
                            mat[idx(target)][idx(m)] = mat[idx(target)][idx(m)].add(&g);
                        }
                    }
                }
            }
            for i in 0..dim {
                mat[i][i] = mat[i][i].sub(&GaussRat::one());
            }
            let kernel = kernel_basis(&mat);
            Ok(kernel
                .into_iter()
                .map(|v| {
                    let coeffs = (-band..=band)
                        .map(|m| {
                            let g = &v[idx(m)];
                            (
                                m,
                                ExactComplex::from_rat(g.re.clone())
                                    .add(&ExactComplex::i().scale(&g.im)),
                            )
                        })
                        .collect();
                    Observable::trig(coeffs)
                })
                .collect())
        }
    }
}

/// Cycles of primitive length ≤ p_max on which W ≡ 1 up to `tol` (use
/// tol = 0 with cylinder weights for an exact search).
pub fn find_w_cycles(
    sys: &DynamicalSystem,
    w: &Observable,
    p_max: usize,
    tol: f64,
) -> Result<Vec<Cycle>> {
    let mut out = Vec::new();
    for cycle in enumerate_cycles(sys, p_max)? {
        if w_cycle_residual(w, &cycle)? <= tol {
            out.push(cycle);
        }
    }
    Ok(out)
}

/// max_i |W(x_i) − 1| over the cycle, exact when the point values have a
/// radical form.
pub fn w_cycle_residual(w: &Observable, cycle: &Cycle) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..cycle.len() {
        let x = cycle.point(i);
        let d = match w.eval(x) {
            Ok(v) => v.sub(&ExactComplex::one()).abs_f64(),
            Err(EndoError::Unsupported(_)) => {
                let (re, im) = w.eval_f64(x)?;
                ((re - 1.0).powi(2) + im.powi(2)).sqrt()
            }
            Err(e) => return Err(e),
        };
        worst = worst.max(d);
    }
    Ok(worst)
}

/// E_n(f) = (R_V^n f) ∘ r^n: the conditional expectation onto
/// r^{−n}-measurable observables.
pub fn conditional_expectation(
    sys: &DynamicalSystem,
    v: &Observable,
    f: &Observable,
    n: usize,
) -> Result<Observable> {
    let mut g = apply_ruelle_n(sys, v, f, n)?;
    for _ in 0..n {
        g = g.compose_with_r(sys)?;
    }
    Ok(g)
}

/// L¹(ρ) norm of an observable (exact masses, absolute values in f64).
pub fn l1_norm(rho: &InvariantMeasure, f: &Observable) -> Result<f64> {
    match f {
        Observable::Cylinder { table, .. } => {
            let mut acc = 0.0;
            for (word, v) in table {
                acc += v.abs_f64() * rat_to_f64(&rho.cylinder_mass(word));
            }
            Ok(acc)
        }
        Observable::Trig { coeffs } => {
            if coeffs.is_empty() {
                return Ok(0.0);
            }
            let grid = 1 << 12;
            let mut acc = 0.0;
            for i in 0..grid {
                let (re, im) = f.eval_angle_f64(i as f64 / grid as f64);
                acc += (re * re + im * im).sqrt();
            }
            Ok(acc / grid as f64)
        }
    }
}

/// d_n = ‖R_V^n f − ∫f dν‖_{L¹(ν)} for n = 1..n_max; geometric decay of
/// this sequence witnesses the averaging property.
pub fn averaging_decay(
    sys: &DynamicalSystem,
    nu: &InvariantMeasure,
    v: &Observable,
    f: &Observable,
    n_max: usize,
) -> Result<Vec<f64>> {
    let mean = nu.integrate(f)?;
    let center = Observable::constant(sys, mean);
    let mut g = f.clone();
    let mut out = Vec::with_capacity(n_max);
    for _ in 1..=n_max {
        g = apply_ruelle(sys, v, &g)?;
        out.push(l1_norm(nu, &g.sub(sys, &center)?)?);
    }
    Ok(out)
}

/// (1/n) Σ_{k<n} ln|m₀(r^k x)|. `None` encodes −∞ (the orbit met a zero
/// of m₀).
pub fn birkhoff_log_mean(
    sys: &DynamicalSystem,
    filter: &Filter,
    x: &Point,
    n: usize,
) -> Result<Option<f64>> {
    match sys {
        DynamicalSystem::Sft(_) => {
            let depth = filter.m0.depth().unwrap_or(1);
            let mut acc = 0.0;
            for k in 0..n {
                let window: Vec<usize> = (0..depth).map(|j| x.letter_at(k + j)).collect();
                let v = match &filter.m0 {
                    Observable::Cylinder { table, .. } => table
                        .get(&window)
                        .map(|v| v.abs_f64())
                        .unwrap_or(0.0),
                    _ => unreachable!(),
                };
                if v == 0.0 {
                    return Ok(None);
                }
                acc += v.ln();
            }
            Ok(Some(acc / n as f64))
        }
        DynamicalSystem::Torus(t) => {
            // iterate the orbit exactly as numerators mod the fixed
            // denominator; naive f64 iteration of x ↦ Nx mod 1 sheds one
            // bit of state per step and collapses long orbits
            let a = x
                .as_angle()
                .ok_or_else(|| EndoError::InvalidPoint("expected torus point".into()))?;
            let q = a.denom().clone();
            let mut p = a.numer().clone();
            let deg = num::BigInt::from(t.degree);
            let qf = crate::exact::rat_to_f64(&crate::exact::Rat::new(
                num::BigInt::from(1),
                q.clone(),
            ));
            let mut acc = 0.0;
            use num::ToPrimitive;
            for _ in 0..n {
                let xk = p.to_f64().unwrap_or(0.0) * qf;
                let (re, im) = filter.m0.eval_angle_f64(xk);
                let v = (re * re + im * im).sqrt();
                if v < 1e-300 {
                    return Ok(None);
                }
                acc += v.ln();
                p = (p * &deg) % &q;
            }
            Ok(Some(acc / n as f64))
        }
    }
}

#[derive(Clone, Debug)]
pub struct LyapunovReport {
    /// Monte Carlo estimate of A = ∫ ln|m₀| dρ over orbits avoiding zeros.
    pub a_hat: f64,
    /// standard error of the estimate
    pub std_err: f64,
    /// fraction of sampled orbits that met a zero of m₀ (their −∞
    /// contribution is reported here instead of being averaged)
    pub zero_fraction: f64,
    /// |m₀| ≡ 1 exactly: the ergodic theorem's hypothesis fails
    pub unimodular_hypothesis: bool,
    pub samples: usize,
    pub orbit_len: usize,
}

/// Monte Carlo estimate of the Birkhoff limit A.
pub fn lyapunov_a(
    sys: &DynamicalSystem,
    rho: &InvariantMeasure,
    filter: &Filter,
    samples: usize,
    orbit_len: usize,
    seed: u64,
) -> Result<LyapunovReport> {
    let hypothesis_fails = filter
        .m0
        .modulus_sqr(sys)?
        .sub(sys, &Observable::constant(sys, ExactComplex::one()))?
        .is_zero();

    // per-sample worker data prepared up front so the hot loop is cheap
    enum Engine {
        Torus {
            degree: f64,
            coeffs: Vec<(f64, f64, f64)>, // (frequency, re, im)
        },
        Sft {
            n_letters: usize,
            window: usize,
            state_len: usize,
            // log|m₀| per encoded window, f64::NEG_INFINITY marks zeros
            logs: Vec<f64>,
            // cumulative transition distribution per encoded state word
            cum: Vec<Vec<f64>>,
            // initial distribution over state words
            init: Vec<f64>,
        },
    }

    let engine = match (sys, &filter.m0) {
        (DynamicalSystem::Torus(t), Observable::Trig { coeffs }) => Engine::Torus {
            degree: t.degree as f64,
            coeffs: coeffs
                .iter()
                .map(|(&m, c)| {
                    let (re, im) = c.to_f64();
                    (m as f64, re, im)
                })
                .collect(),
        },
        (DynamicalSystem::Sft(s), Observable::Cylinder { depth, table }) => {
            let n_letters = s.alphabet.size();
            let window = *depth;
            let state_len = (rho.weight_depth().saturating_sub(1)).max(1);
            let encode = |w: &[usize]| w.iter().fold(0usize, |a, &l| a * n_letters + l);
            let mut logs = vec![f64::NEG_INFINITY; n_letters.pow(window as u32)];
            for (word, v) in table {
                let a = v.abs_f64();
                logs[encode(word)] = if a == 0.0 { f64::NEG_INFINITY } else { a.ln() };
            }
            let n_states = n_letters.pow(state_len as u32);
            let mut cum = vec![vec![0.0; n_letters]; n_states];
            let mut init = vec![0.0; n_states];
            for u in s.admissible_words(state_len) {
                let code = encode(&u);
                init[code] = rat_to_f64(&rho.cylinder_mass(&u));
                let mass = rho.cylinder_mass(&u);
                let mut running = 0.0;
                for b in 0..n_letters {
                    let mut ub = u.clone();
                    ub.push(b);
                    let p = if rat_to_f64(&mass) > 0.0 {
                        rat_to_f64(&(rho.cylinder_mass(&ub) / mass.clone()))
                    } else {
                        0.0
                    };
                    running += p;
                    cum[code][b] = running;
                }
            }
            Engine::Sft { n_letters, window, state_len, logs, cum, init }
        }
        _ => {
            return Err(EndoError::InvalidFilter(
                "filter kind does not match the system".into(),
            ))
        }
    };

    let results: Vec<Option<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed.wrapping_add((i as u64).wrapping_mul(0x9e3779b97f4a7c15)),
            );
            match &engine {
                Engine::Torus { degree, coeffs } => {
                    // a random point's orbit is its base-N digit stream;
                    // f64 iteration of x ↦ Nx mod 1 sheds a digit of state
                    // per step, so rebuild x from fresh digits periodically
                    let n = *degree as u32;
                    let log2n = (*degree).log2();
                    let tail = ((52.0 / log2n).floor() as usize).max(2);
                    let rebuild = ((18.0 / log2n).floor() as usize).max(1);
                    let digits: Vec<u8> = (0..orbit_len + tail)
                        .map(|_| rng.gen_range(0..n) as u8)
                        .collect();
                    let mut x = 0.0;
                    let mut acc = 0.0;
                    for k in 0..orbit_len {
                        if k % rebuild == 0 {
                            x = digits[k..k + tail]
                                .iter()
                                .rev()
                                .fold(0.0, |a, &d| (a + d as f64) / degree);
                        }
                        let mut re = 0.0;
                        let mut im = 0.0;
                        for &(m, cr, ci) in coeffs {
                            let (s, c) = (std::f64::consts::TAU * m * x).sin_cos();
                            re += cr * c - ci * s;
                            im += cr * s + ci * c;
                        }
                        let v2 = re * re + im * im;
                        if v2 < 1e-280 {
                            return None;
                        }
                        acc += 0.5 * v2.ln();
                        x = (x * degree).fract();
                    }
                    Some(acc / orbit_len as f64)
                }
                Engine::Sft { n_letters, window, state_len, logs, cum, init } => {
                    // draw the initial state word
                    let mut u = rng.gen_range(0.0..1.0);
                    let mut state = init.len() - 1;
                    for (code, &p) in init.iter().enumerate() {
                        if u < p {
                            state = code;
                            break;
                        }
                        u -= p;
                    }
                    // unpack state into a letter buffer
                    let mut letters: Vec<usize> = Vec::with_capacity(orbit_len + window);
                    let mut code = state;
                    let mut tmp = vec![0usize; *state_len];
                    for j in (0..*state_len).rev() {
                        tmp[j] = code % n_letters;
                        code /= n_letters;
                    }
                    letters.extend_from_slice(&tmp);
                    let mask = n_letters.pow(*state_len as u32 - 1);
                    let mut st = state;
                    while letters.len() < orbit_len + window {
                        let r: f64 = rng.gen_range(0.0..1.0);
                        let row = &cum[st];
                        let mut b = n_letters - 1;
                        for (k, &c) in row.iter().enumerate() {
                            if r < c {
                                b = k;
                                break;
                            }
                        }
                        letters.push(b);
                        st = (st % mask) * n_letters + b;
                    }
                    let mut acc = 0.0;
                    let win_base = n_letters.pow(*window as u32 - 1);
                    // rolling window encoding
                    let mut wcode = letters[..*window]
                        .iter()
                        .fold(0usize, |a, &l| a * n_letters + l);
                    for k in 0..orbit_len {
                        let v = logs[wcode];
                        if v == f64::NEG_INFINITY {
                            return None;
                        }
                        acc += v;
                        if k + 1 < orbit_len {
                            wcode = (wcode % win_base) * n_letters + letters[k + *window];
                        }
                    }
                    Some(acc / orbit_len as f64)
                }
            }
        })
        .collect();

    let finite: Vec<f64> = results.iter().filter_map(|r| *r).collect();
    let zero_fraction = 1.0 - finite.len() as f64 / samples as f64;
    let (a_hat, std_err) = if finite.is_empty() {
        (f64::NEG_INFINITY, 0.0)
    } else {
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (finite.len().max(2) - 1) as f64;
        (mean, (var / finite.len() as f64).sqrt())
    };
    Ok(LyapunovReport {
        a_hat,
        std_err,
        zero_fraction,
        unimodular_hypothesis: hypothesis_fails,
        samples,
        orbit_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endo::{SftSystem, TorusSystem};
    use crate::exact::Rat;
    use crate::measure::invariant_measure;
    use num::{One, Zero};

    fn gm() -> DynamicalSystem {
        DynamicalSystem::Sft(SftSystem::golden_mean())
    }

    fn t2() -> DynamicalSystem {
        DynamicalSystem::Torus(TorusSystem::new(2).unwrap())
    }

    #[test]
    fn qmf_residuals() {
        assert_eq!(qmf_residual(&gm(), &golden_mean_filter()).unwrap(), 0.0);
        assert_eq!(qmf_residual(&t2(), &haar_filter(1)).unwrap(), 0.0);
        let one = Filter::plain(Observable::constant(&t2(), ExactComplex::one()));
        assert_eq!(qmf_residual(&t2(), &one).unwrap(), 0.0);
        let mut z = BTreeMap::new();
        z.insert(1, ExactComplex::one());
        let zf = Filter::plain(Observable::trig(z));
        assert_eq!(qmf_residual(&t2(), &zf).unwrap(), 0.0);
        let two = Filter::plain(Observable::constant(&t2(), ExactComplex::from_int(2)));
        let r = qmf_residual(&t2(), &two).unwrap();
        assert!((r - 3.0).abs() < 1e-12);
    }

    #[test]
    fn low_pass_residuals() {
        let cs = enumerate_cycles(&gm(), 1).unwrap();
        assert_eq!(
            low_pass_residual(&gm(), &golden_mean_filter(), &cs[0]).unwrap(),
            0.0
        );
        let tc = enumerate_cycles(&t2(), 2).unwrap();
        assert_eq!(low_pass_residual(&t2(), &haar_filter(1), &tc[0]).unwrap(), 0.0);
        // Haar filter on the 2-cycle {1/3, 2/3}: |m₀| = 1 there, not √2
        let r = low_pass_residual(&t2(), &haar_filter(1), &tc[1]).unwrap();
        assert!(r > 0.4);
    }

    #[test]
    fn weight_values_golden_mean() {
        let w = weight_from_filter(&gm(), &golden_mean_filter()).unwrap();
        let s = SftSystem::golden_mean();
        let x11 = Point::word(&s, &[], &[0]).unwrap();
        let x12 = Point::word(&s, &[0], &[1, 0]).unwrap(); // wait: 1 then 2…
        let x21 = Point::word(&s, &[1], &[0]).unwrap();
        assert_eq!(w.eval(&x11).unwrap(), ExactComplex::one());
        assert_eq!(w.eval(&x12).unwrap(), ExactComplex::one());
        assert!(w.eval(&x21).unwrap().is_zero());
    }

    #[test]
    fn weight_haar_is_cos_squared() {
        let w = weight_from_filter(&t2(), &haar_filter(1)).unwrap();
        for i in 0..32 {
            let x = i as f64 / 32.0;
            let (re, im) = w.eval_angle_f64(x);
            let expect = (std::f64::consts::PI * x).cos().powi(2);
            assert!((re - expect).abs() < 1e-12 && im.abs() < 1e-12);
        }
        let zero = Filter::plain(Observable::constant(&t2(), ExactComplex::zero()));
        assert!(weight_from_filter(&t2(), &zero).unwrap().is_zero());
    }

    #[test]
    fn ruelle_pointwise_examples() {
        // uniform W = 1/𝔠, f = χ_[1]: R f(x) = A(1,x₀)/N(x₀)
        let s = SftSystem::golden_mean();
        let w = weight_uniform(&gm());
        let f = Observable::indicator(&s, &[0]).unwrap();
        let g = apply_ruelle(&gm(), &w, &f).unwrap();
        let x1 = Point::word(&s, &[], &[0]).unwrap();
        let x2 = Point::word(&s, &[1], &[0]).unwrap();
        assert_eq!(g.eval(&x1).unwrap(), ExactComplex::from_rat(rat_from(1, 2)));
        assert_eq!(g.eval(&x2).unwrap(), ExactComplex::one());

        // Haar: R_W 1 = 1 exactly
        let w = weight_from_filter(&t2(), &haar_filter(1)).unwrap();
        let one = Observable::constant(&t2(), ExactComplex::one());
        let g = apply_ruelle(&t2(), &w, &one).unwrap();
        assert!(g.sub(&t2(), &one).unwrap().is_zero());

        // f ≡ 0 stays 0
        let zero = Observable::constant(&t2(), ExactComplex::zero());
        assert!(apply_ruelle(&t2(), &w, &zero).unwrap().is_zero());
    }

    /// Uniform weight 1/𝔠 as an observable.
    fn weight_uniform(sys: &DynamicalSystem) -> Observable {
        match sys {
            DynamicalSystem::Sft(s) => {
                let table = s
                    .admissible_words(2)
                    .into_iter()
                    .map(|w| {
                        let v = ExactComplex::from_rat(rat_from(1, s.col_sum(w[1]) as i64));
                        (w, v)
                    })
                    .collect();
                Observable::Cylinder { depth: 2, table }
            }
            DynamicalSystem::Torus(t) => Observable::constant(
                sys,
                ExactComplex::from_rat(rat_from(1, t.degree as i64)),
            ),
        }
    }

    #[test]
    fn ruelle_matrix_matches_pointwise() {
        let w = weight_from_filter(&gm(), &golden_mean_filter()).unwrap();
        let s = SftSystem::golden_mean();
        for depth in 2..=4 {
            let m = ruelle_matrix(&gm(), &w, depth).unwrap();
            let words = s.admissible_words(depth);
            for (j, wj) in words.iter().enumerate() {
                let chi = Observable::indicator(&s, wj).unwrap();
                let img = apply_ruelle(&gm(), &w, &chi)
                    .unwrap()
                    .extend_to_depth(&s, depth)
                    .unwrap();
                for (i, wi) in words.iter().enumerate() {
                    let (re, im) = img.eval(&word_point(&s, wi)).unwrap().as_gauss().unwrap();
                    assert_eq!(m[i][j].re, re);
                    assert_eq!(m[i][j].im, im);
                }
            }
        }
    }

    fn word_point(s: &SftSystem, w: &[usize]) -> Point {
        // extend the word to an eventually periodic point
        let mut tail = vec![*w.last().unwrap()];
        loop {
            let last = *tail.last().unwrap();
            let next = (0..s.alphabet.size()).find(|&b| s.admissible(last, b)).unwrap();
            if let Some(pos) = tail.iter().position(|&l| l == next) {
                let mut prefix = w[..w.len() - 1].to_vec();
                prefix.extend_from_slice(&tail[..pos]);
                return Point::word(s, &prefix, &tail[pos..]).unwrap();
            }
            tail.push(next);
        }
    }

    #[test]
    fn harmonic_space_contains_constants() {
        let w = weight_from_filter(&gm(), &golden_mean_filter()).unwrap();
        let basis = harmonic_space(&gm(), &w, 3).unwrap();
        assert!(!basis.is_empty());
        // the constant 1 must lie in the span; with the golden-mean filter
        // it is in fact an eigenvector, so check R_W 1 = 1 and membership
        let one = Observable::constant(&gm(), ExactComplex::one());
        assert!(apply_ruelle(&gm(), &w, &one)
            .unwrap()
            .sub(&gm(), &one)
            .unwrap()
            .is_zero());

        let wt = weight_from_filter(&t2(), &haar_filter(1)).unwrap();
        let basis = harmonic_space(&t2(), &wt, 8).unwrap();
        assert_eq!(basis.len(), 1);
        let h = &basis[0];
        // unique up to scale and constant
        match h {
            Observable::Trig { coeffs } => {
                assert_eq!(coeffs.len(), 1);
                assert!(coeffs.contains_key(&0));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn harmonic_space_zero_weight_is_trivial() {
        let w = Observable::constant(&gm(), ExactComplex::zero());
        let w = w.extend_to_depth(&SftSystem::golden_mean(), 2).unwrap();
        assert!(harmonic_space(&gm(), &w, 2).unwrap().is_empty());
    }

    #[test]
    fn w_cycles_examples() {
        let w = weight_from_filter(&gm(), &golden_mean_filter()).unwrap();
        let found = find_w_cycles(&gm(), &w, 3, 0.0).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].len(), 1); // {111…}

        // m₀ = (1+z³)/√2: W = cos²(3πx), W-cycles {0} and {1/3, 2/3}
        let w3 = weight_from_filter(&t2(), &haar_filter(3)).unwrap();
        let found = find_w_cycles(&t2(), &w3, 2, 0.0).unwrap();
        assert_eq!(found.len(), 2);
        assert_eq!(found[0].len(), 1);
        assert_eq!(found[1].len(), 2);

        // plain Haar: only {0} up to length 8
        let wh = weight_from_filter(&t2(), &haar_filter(1)).unwrap();
        let found = find_w_cycles(&t2(), &wh, 8, 1e-9).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].len(), 1);
    }

    #[test]
    fn conditional_expectation_examples() {
        let s = SftSystem::golden_mean();
        let v = weight_uniform(&gm());
        let f = Observable::indicator(&s, &[0]).unwrap();
        // n = 0 is the identity
        let e0 = conditional_expectation(&gm(), &v, &f, 0).unwrap();
        assert!(e0.sub(&gm(), &f).unwrap().is_zero());
        // n = 1: E₁(f)(x) = A(1, x₁)/N(x₁), a function of the second letter
        let e1 = conditional_expectation(&gm(), &v, &f, 1).unwrap();
        let x11 = Point::word(&s, &[], &[0]).unwrap();
        let x12 = Point::word(&s, &[0], &[1, 0]).unwrap();
        let x21 = Point::word(&s, &[1], &[0]).unwrap();
        assert_eq!(e1.eval(&x11).unwrap(), ExactComplex::from_rat(rat_from(1, 2)));
        assert_eq!(e1.eval(&x12).unwrap(), ExactComplex::one());
        assert_eq!(e1.eval(&x21).unwrap(), ExactComplex::from_rat(rat_from(1, 2)));
        // E_n(f) → ∫ f dρ = 2/3 for f = χ_[1]
        let rho = invariant_measure(&gm(), None).unwrap();
        let e8 = conditional_expectation(&gm(), &v, &f, 8).unwrap();
        let c = rho.integrate(&f).unwrap();
        let diff = e8.sub(&gm(), &Observable::constant(&gm(), c)).unwrap();
        assert!(diff.sup_abs() < 0.01);
    }

    #[test]
    fn projection_properties() {
        let s = SftSystem::golden_mean();
        let v = weight_uniform(&gm());
        let f = Observable::indicator(&s, &[0, 1]).unwrap();
        for n in 1..=2 {
            let e = conditional_expectation(&gm(), &v, &f, n).unwrap();
            let ee = conditional_expectation(&gm(), &v, &e, n).unwrap();
            assert!(ee.sub(&gm(), &e).unwrap().is_zero());
            // module property: E_n(f · g∘rⁿ) = g∘rⁿ · E_n(f)
            let g = Observable::indicator(&s, &[0]).unwrap();
            let mut grn = g.clone();
            for _ in 0..n {
                grn = grn.compose_with_r(&gm()).unwrap();
            }
            let lhs = conditional_expectation(&gm(), &v, &f.mul(&gm(), &grn).unwrap(), n).unwrap();
            let rhs = grn.mul(&gm(), &e).unwrap();
            assert!(lhs.sub(&gm(), &rhs).unwrap().is_zero());
        }
    }

    #[test]
    fn averaging_decay_ratio_golden_mean() {
        let s = SftSystem::golden_mean();
        let rho = invariant_measure(&gm(), None).unwrap();
        let v = weight_uniform(&gm());
        let f = Observable::indicator(&s, &[0]).unwrap();
        let d = averaging_decay(&gm(), &rho, &v, &f, 10).unwrap();
        // second eigenvalue of the backward matrix is −1/2
        for n in 3..9 {
            assert!((d[n + 1] / d[n] - 0.5).abs() < 1e-9, "ratio at n={}: {}", n, d[n + 1] / d[n]);
        }
        // constants decay to zero immediately
        let c = Observable::constant(&gm(), ExactComplex::from_int(5));
        let d = averaging_decay(&gm(), &rho, &v, &c, 3).unwrap();
        assert!(d.iter().all(|&x| x == 0.0));
        // torus: f = z is annihilated in one step
        let nu = invariant_measure(&t2(), None).unwrap();
        let vt = weight_uniform(&t2());
        let mut coeffs = BTreeMap::new();
        coeffs.insert(1, ExactComplex::one());
        let z = Observable::trig(coeffs);
        let d = averaging_decay(&t2(), &nu, &vt, &z, 3).unwrap();
        assert!(d.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn duality_integral_preserved() {
        let s = SftSystem::golden_mean();
        let rho = invariant_measure(&gm(), None).unwrap();
        let v = weight_uniform(&gm());
        for depth in 1..=5 {
            for w in s.admissible_words(depth) {
                let f = Observable::indicator(&s, &w).unwrap();
                let lhs = rho.integrate(&apply_ruelle(&gm(), &v, &f).unwrap()).unwrap();
                let rhs = rho.integrate(&f).unwrap();
                assert!(lhs.sub(&rhs).is_zero(), "duality fails at {:?}", w);
            }
        }
    }

    #[test]
    fn birkhoff_golden_mean_hits_zero() {
        let s = SftSystem::golden_mean();
        let f = golden_mean_filter();
        // any orbit through the pattern 21 gives −∞
        let x = Point::word(&s, &[0, 1], &[0]).unwrap(); // 12111…
        assert_eq!(birkhoff_log_mean(&gm(), &f, &x, 5).unwrap(), None);
        // the all-ones point stays on |m₀| = √2
        let y = Point::word(&s, &[], &[0]).unwrap();
        let v = birkhoff_log_mean(&gm(), &f, &y, 100).unwrap().unwrap();
        assert!((v - 0.5 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn birkhoff_haar_converges() {
        let f = haar_filter(1);
        let x = Point::angle(Rat::new(num::BigInt::from(1), num::BigInt::from(999_999_937)));
        let v = birkhoff_log_mean(&t2(), &f, &x, 10_000).unwrap().unwrap();
        assert!((v.exp() - (-(2f64.ln()) / 2.0).exp()).abs() < 1e-2);
    }

    #[test]
    fn lyapunov_haar_matches_quadrature() {
        let rho = invariant_measure(&t2(), None).unwrap();
        let rep = lyapunov_a(&t2(), &rho, &haar_filter(1), 20_000, 500, 42).unwrap();
        let expect = -(2f64.ln()) / 2.0;
        assert!((rep.a_hat - expect).abs() < 3.0 * rep.std_err + 1e-3);
        assert!(rep.zero_fraction < 1e-6);
        assert!(!rep.unimodular_hypothesis);
    }

    #[test]
    fn lyapunov_unimodular_flagged() {
        let rho = invariant_measure(&t2(), None).unwrap();
        let mut coeffs = BTreeMap::new();
        coeffs.insert(1, ExactComplex::one());
        let f = Filter::plain(Observable::trig(coeffs));
        let rep = lyapunov_a(&t2(), &rho, &f, 100, 50, 1).unwrap();
        assert!(rep.unimodular_hypothesis);
        assert!(rep.a_hat.abs() < 1e-9);
    }

    #[test]
    fn lyapunov_golden_mean_zero_set() {
        // the filter vanishes on [21], a positive-measure set, so most
        // long orbits hit it: the zero fraction must be near 1
        let rho = invariant_measure(&gm(), None).unwrap();
        let rep = lyapunov_a(&gm(), &rho, &golden_mean_filter(), 2_000, 200, 7).unwrap();
        assert!(rep.zero_fraction > 0.99);
    }

    #[test]
    fn w_cycle_search_is_complete() {
        // brute force against w_cycle_residual on every enumerated cycle
        let w = weight_from_filter(&gm(), &golden_mean_filter()).unwrap();
        let found = find_w_cycles(&gm(), &w, 4, 0.0).unwrap();
        for c in enumerate_cycles(&gm(), 4).unwrap() {
            let manual = w_cycle_residual(&w, &c).unwrap() == 0.0;
            assert_eq!(manual, found.iter().any(|fc| fc == &c));
        }
    }

    #[test]
    fn rejects_non_unimodular_phase() {
        let m0 = Observable::constant(&t2(), ExactComplex::one());
        assert!(Filter::new(m0.clone(), vec![ExactComplex::from_int(2)]).is_err());
        assert!(Filter::new(m0, vec![ExactComplex::i()]).is_ok());
    }

    #[test]
    fn gauss_rat_roundtrip_sanity() {
        assert!(Rat::one() > Rat::zero());
    }
}
