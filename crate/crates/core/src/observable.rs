//! Observables: cylinder functions on shift spaces and trigonometric
//! polynomials on the circle, with exact pointwise evaluation and the
//! fiber-average operation underlying the quadrature-mirror condition.

use std::collections::BTreeMap;

use num::{BigInt, Signed, ToPrimitive, Zero};

use crate::endo::{preimages, DynamicalSystem, Point, SftSystem};
use crate::error::{EndoError, Result};
use crate::exact::{rat_from, rat_int, rat_to_f64, ExactComplex, RadicalSum, Rat};

/// cos(2πk/24), k reduced mod 24.
fn cos24(k: i64) -> RadicalSum {
    let mut k = k.rem_euclid(24);
    if k > 12 {
        k = 24 - k;
    }
    let (sign, k) = if k > 6 { (true, 12 - k) } else { (false, k) };
    let v = match k {
        0 => RadicalSum::from_int(1),
        // cos 15° = (√6 + √2)/4
        1 => RadicalSum::radical(rat_from(1, 4), 6).add(&RadicalSum::radical(rat_from(1, 4), 2)),
        2 => RadicalSum::radical(rat_from(1, 2), 3),
        3 => RadicalSum::radical(rat_from(1, 2), 2),
        4 => RadicalSum::from_rat(rat_from(1, 2)),
        5 => RadicalSum::radical(rat_from(1, 4), 6).sub(&RadicalSum::radical(rat_from(1, 4), 2)),
        6 => RadicalSum::zero(),
        _ => unreachable!(),
    };
    if sign {
        v.neg()
    } else {
        v
    }
}

/// e^{2πit} for rational t whose denominator divides 24.
fn exp_exact(t: &Rat) -> Option<ExactComplex> {
    let scaled = t * rat_int(24);
    if !scaled.is_integer() {
        return None;
    }
    let k = scaled.to_integer().to_i64()?;
    Some(ExactComplex {
        re: cos24(k),
        im: cos24(k - 6), // sin(2πk/24) = cos(2π(k−6)/24)
    })
}

fn exp_f64(t: f64) -> (f64, f64) {
    let a = std::f64::consts::TAU * t;
    (a.cos(), a.sin())
}

/// A function on the state space: constant on depth-d cylinders (shift
/// systems) or a trigonometric polynomial Σ c_m e^{2πimx} (torus systems).
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    Cylinder {
        depth: usize,
        table: BTreeMap<Vec<usize>, ExactComplex>,
    },
    Trig {
        coeffs: BTreeMap<i64, ExactComplex>,
    },
}

impl Observable {
    /// Cylinder observable from explicit values; every admissible word of
    /// the given depth must be covered and no other keys allowed.
    pub fn cylinder(
        sys: &SftSystem,
        depth: usize,
        table: BTreeMap<Vec<usize>, ExactComplex>,
    ) -> Result<Observable> {
        if depth == 0 {
            return Err(EndoError::InvalidSystem("cylinder depth must be positive".into()));
        }
        let words = sys.admissible_words(depth);
        for w in &words {
            if !table.contains_key(w) {
                return Err(EndoError::InvalidSystem(format!(
                    "missing cylinder value for word {:?}",
                    w
                )));
            }
        }
        if table.len() != words.len() {
            return Err(EndoError::InvalidSystem(
                "cylinder table has keys that are not admissible words of the stated depth".into(),
            ));
        }
        Ok(Observable::Cylinder { depth, table })
    }

    /// Indicator of the cylinder set [w].
    pub fn indicator(sys: &SftSystem, w: &[usize]) -> Result<Observable> {
        if !sys.word_admissible(w) || w.is_empty() {
            return Err(EndoError::InvalidSystem("indicator word not admissible".into()));
        }
        let table = sys
            .admissible_words(w.len())
            .into_iter()
            .map(|u| {
                let v = if u == w { ExactComplex::one() } else { ExactComplex::zero() };
                (u, v)
            })
            .collect();
        Ok(Observable::Cylinder { depth: w.len(), table })
    }

    pub fn trig(coeffs: BTreeMap<i64, ExactComplex>) -> Observable {
        let coeffs = coeffs.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        Observable::Trig { coeffs }
    }

    pub fn constant(sys: &DynamicalSystem, c: ExactComplex) -> Observable {
        match sys {
            DynamicalSystem::Sft(s) => {
                let table = s
                    .admissible_words(1)
                    .into_iter()
                    .map(|w| (w, c.clone()))
                    .collect();
                Observable::Cylinder { depth: 1, table }
            }
            DynamicalSystem::Torus(_) => {
                let mut coeffs = BTreeMap::new();
                if !c.is_zero() {
                    coeffs.insert(0, c);
                }
                Observable::Trig { coeffs }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Observable::Cylinder { table, .. } => table.values().all(|v| v.is_zero()),
            Observable::Trig { coeffs } => coeffs.is_empty(),
        }
    }

    pub fn depth(&self) -> Option<usize> {
        match self {
            Observable::Cylinder { depth, .. } => Some(*depth),
            Observable::Trig { .. } => None,
        }
    }

    /// Exact value at a point. Fails with `Unsupported` for trigonometric
    /// polynomials at angles without a closed radical form (denominator
    /// not dividing 24 after multiplication by the frequency).
    pub fn eval(&self, x: &Point) -> Result<ExactComplex> {
        match (self, x) {
            (Observable::Cylinder { depth, table }, p @ Point::Word { .. }) => {
                let w = p.letters(*depth);
                Ok(table[&w].clone())
            }
            (Observable::Trig { coeffs }, Point::Angle(a)) => {
                let mut acc = ExactComplex::zero();
                for (&m, c) in coeffs {
                    let t = a * rat_int(m);
                    let e = exp_exact(&(t.clone() - t.floor())).ok_or_else(|| {
                        EndoError::Unsupported(format!(
                            "no exact radical form for e^(2πi·{})",
                            t
                        ))
                    })?;
                    acc = acc.add(&c.mul(&e));
                }
                Ok(acc)
            }
            _ => Err(EndoError::InvalidPoint("observable/point kind mismatch".into())),
        }
    }

    /// Floating-point value; torus points may also be given as raw f64
    /// angles via `eval_angle_f64`.
    pub fn eval_f64(&self, x: &Point) -> Result<(f64, f64)> {
        match (self, x) {
            (Observable::Cylinder { .. }, Point::Word { .. }) => Ok(self.eval(x)?.to_f64()),
            (Observable::Trig { .. }, Point::Angle(a)) => Ok(self.eval_angle_f64(rat_to_f64(a))),
            _ => Err(EndoError::InvalidPoint("observable/point kind mismatch".into())),
        }
    }

    pub fn eval_angle_f64(&self, x: f64) -> (f64, f64) {
        match self {
            Observable::Trig { coeffs } => {
                let mut re = 0.0;
                let mut im = 0.0;
                for (&m, c) in coeffs {
                    let (cr, ci) = c.to_f64();
                    let (er, ei) = exp_f64(m as f64 * x);
                    re += cr * er - ci * ei;
                    im += cr * ei + ci * er;
                }
                (re, im)
            }
            Observable::Cylinder { .. } => panic!("eval_angle_f64 on a cylinder observable"),
        }
    }

    /// Rewrite a cylinder observable at a (weakly) greater depth.
    pub fn extend_to_depth(&self, sys: &SftSystem, d: usize) -> Result<Observable> {
        match self {
            Observable::Cylinder { depth, table } => {
                if d < *depth {
                    return Err(EndoError::InvalidSystem(
                        "cannot extend a cylinder observable to a smaller depth".into(),
                    ));
                }
                let new_table = sys
                    .admissible_words(d)
                    .into_iter()
                    .map(|w| {
                        let v = table[&w[..*depth].to_vec()].clone();
                        (w, v)
                    })
                    .collect();
                Ok(Observable::Cylinder { depth: d, table: new_table })
            }
            Observable::Trig { .. } => {
                Err(EndoError::InvalidSystem("extend_to_depth only applies to cylinders".into()))
            }
        }
    }

    fn zip_cylinders(
        sys: &SftSystem,
        f: &Observable,
        g: &Observable,
        op: impl Fn(&ExactComplex, &ExactComplex) -> ExactComplex,
    ) -> Result<Observable> {
        let d = f.depth().unwrap().max(g.depth().unwrap());
        let (f, g) = (f.extend_to_depth(sys, d)?, g.extend_to_depth(sys, d)?);
        match (&f, &g) {
            (
                Observable::Cylinder { table: tf, .. },
                Observable::Cylinder { table: tg, .. },
            ) => {
                let table = tf.iter().map(|(w, v)| (w.clone(), op(v, &tg[w]))).collect();
                Ok(Observable::Cylinder { depth: d, table })
            }
            _ => unreachable!(),
        }
    }

    pub fn add(&self, sys: &DynamicalSystem, g: &Observable) -> Result<Observable> {
        match (sys, self, g) {
            (DynamicalSystem::Sft(s), Observable::Cylinder { .. }, Observable::Cylinder { .. }) => {
                Self::zip_cylinders(s, self, g, |a, b| a.add(b))
            }
            (_, Observable::Trig { coeffs: ca }, Observable::Trig { coeffs: cb }) => {
                let mut out = ca.clone();
                for (m, c) in cb {
                    let e = out.entry(*m).or_insert_with(ExactComplex::zero);
                    *e = e.add(c);
                }
                Ok(Observable::trig(out))
            }
            _ => Err(EndoError::InvalidSystem("observable kind mismatch".into())),
        }
    }

    pub fn sub(&self, sys: &DynamicalSystem, g: &Observable) -> Result<Observable> {
        self.add(sys, &g.scale(&ExactComplex::from_int(-1)))
    }

    pub fn mul(&self, sys: &DynamicalSystem, g: &Observable) -> Result<Observable> {
        match (sys, self, g) {
            (DynamicalSystem::Sft(s), Observable::Cylinder { .. }, Observable::Cylinder { .. }) => {
                Self::zip_cylinders(s, self, g, |a, b| a.mul(b))
            }
            (_, Observable::Trig { coeffs: ca }, Observable::Trig { coeffs: cb }) => {
                let mut out: BTreeMap<i64, ExactComplex> = BTreeMap::new();
                for (ma, a) in ca {
                    for (mb, b) in cb {
                        let e = out.entry(ma + mb).or_insert_with(ExactComplex::zero);
                        *e = e.add(&a.mul(b));
                    }
                }
                Ok(Observable::trig(out))
            }
            _ => Err(EndoError::InvalidSystem("observable kind mismatch".into())),
        }
    }

    pub fn scale(&self, c: &ExactComplex) -> Observable {
        match self {
            Observable::Cylinder { depth, table } => Observable::Cylinder {
                depth: *depth,
                table: table.iter().map(|(w, v)| (w.clone(), v.mul(c))).collect(),
            },
            Observable::Trig { coeffs } => Observable::trig(
                coeffs.iter().map(|(&m, v)| (m, v.mul(c))).collect(),
            ),
        }
    }

    pub fn conj(&self) -> Observable {
        match self {
            Observable::Cylinder { depth, table } => Observable::Cylinder {
                depth: *depth,
                table: table.iter().map(|(w, v)| (w.clone(), v.conj())).collect(),
            },
            Observable::Trig { coeffs } => Observable::trig(
                coeffs.iter().map(|(&m, v)| (-m, v.conj())).collect(),
            ),
        }
    }

    /// |f|² as an observable.
    pub fn modulus_sqr(&self, sys: &DynamicalSystem) -> Result<Observable> {
        self.mul(sys, &self.conj())
    }

    /// f ∘ r: depth grows by one on shift spaces, frequencies multiply by
    /// N on the torus.
    pub fn compose_with_r(&self, sys: &DynamicalSystem) -> Result<Observable> {
        match (sys, self) {
            (DynamicalSystem::Sft(s), Observable::Cylinder { depth, table }) => {
                let new_table = s
                    .admissible_words(depth + 1)
                    .into_iter()
                    .map(|w| {
                        let v = table[&w[1..].to_vec()].clone();
                        (w, v)
                    })
                    .collect();
                Ok(Observable::Cylinder { depth: depth + 1, table: new_table })
            }
            (DynamicalSystem::Torus(t), Observable::Trig { coeffs }) => Ok(Observable::trig(
                coeffs
                    .iter()
                    .map(|(&m, c)| (m * t.degree as i64, c.clone()))
                    .collect(),
            )),
            _ => Err(EndoError::InvalidSystem("observable kind mismatch".into())),
        }
    }

    /// The fiber mean x ↦ (1/#r⁻¹(x)) Σ_{r(y)=x} f(y), again an observable
    /// of the same class.
    pub fn fiber_average(&self, sys: &DynamicalSystem) -> Result<Observable> {
        match (sys, self) {
            (DynamicalSystem::Sft(s), Observable::Cylinder { depth, table }) => {
                let d = (*depth).saturating_sub(1).max(1);
                let new_table = s
                    .admissible_words(d)
                    .into_iter()
                    .map(|w| {
                        let n = s.col_sum(w[0]);
                        let mut acc = ExactComplex::zero();
                        for a in 0..s.alphabet.size() {
                            if s.admissible(a, w[0]) {
                                let mut y = vec![a];
                                y.extend_from_slice(&w);
                                y.truncate(*depth);
                                acc = acc.add(&table[&y]);
                            }
                        }
                        (w, acc.scale(&rat_from(1, n as i64)))
                    })
                    .collect();
                Ok(Observable::Cylinder { depth: d, table: new_table })
            }
            (DynamicalSystem::Torus(t), Observable::Trig { coeffs }) => {
                let n = t.degree as i64;
                // mean over y = (x+j)/N of e^{2πimy} is e^{2πi(m/N)x} when
                // N | m and 0 otherwise
                let out = coeffs
                    .iter()
                    .filter(|(&m, _)| m % n == 0)
                    .map(|(&m, c)| (m / n, c.clone()))
                    .collect();
                Ok(Observable::trig(out))
            }
            _ => Err(EndoError::InvalidSystem("observable kind mismatch".into())),
        }
    }

    /// Largest |f| over the space. Exact for cylinders; for trigonometric
    /// polynomials a rigorous upper bound via a fine grid plus a Lipschitz
    /// slack term is returned alongside the grid value.
    pub fn sup_abs(&self) -> f64 {
        match self {
            Observable::Cylinder { table, .. } => table
                .values()
                .map(|v| v.abs_f64())
                .fold(0.0, f64::max),
            Observable::Trig { coeffs } => {
                if coeffs.is_empty() {
                    return 0.0;
                }
                if coeffs.len() == 1 {
                    if let Some(c) = coeffs.get(&0) {
                        return c.abs_f64();
                    }
                }
                let grid = 1 << 14;
                (0..grid)
                    .map(|i| {
                        let (re, im) = self.eval_angle_f64(i as f64 / grid as f64);
                        (re * re + im * im).sqrt()
                    })
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Upper bound on sup|f| that accounts for grid spacing via the
    /// derivative bound 2π Σ |m||c_m|.
    pub fn sup_abs_upper(&self) -> f64 {
        match self {
            Observable::Cylinder { .. } => self.sup_abs(),
            Observable::Trig { coeffs } => {
                let lip: f64 = coeffs
                    .iter()
                    .map(|(&m, c)| std::f64::consts::TAU * (m.abs() as f64) * c.abs_f64())
                    .sum();
                let grid = 1 << 14;
                self.sup_abs() + lip * 0.5 / grid as f64
            }
        }
    }

    /// Lipschitz constant (w.r.t. circle distance) of a trigonometric
    /// polynomial; used for tail estimates in infinite products.
    pub fn trig_lipschitz(&self) -> f64 {
        match self {
            Observable::Trig { coeffs } => coeffs
                .iter()
                .map(|(&m, c)| std::f64::consts::TAU * (m.abs() as f64) * c.abs_f64())
                .sum(),
            Observable::Cylinder { .. } => panic!("trig_lipschitz on a cylinder observable"),
        }
    }
}

/// Exact rational check that Σ over the fiber of |f|² averages to 1 at
/// every sampled point; used by tests as an independent oracle.
pub fn fiber_mean_f64(sys: &DynamicalSystem, f: &Observable, x: &Point) -> Result<f64> {
    let pre = preimages(sys, x)?;
    let mut acc = 0.0;
    for y in &pre {
        let (re, im) = f.eval_f64(y)?;
        acc += re * re + im * im;
    }
    Ok(acc / pre.len() as f64)
}

/// Parse "p/q" style angle used in tests.
pub fn angle(p: i64, q: i64) -> Point {
    Point::angle(Rat::new(BigInt::from(p), BigInt::from(q)))
}

#[allow(unused)]
fn is_zero_rat(r: &Rat) -> bool {
    r.is_zero() || r.abs().is_zero()
}
