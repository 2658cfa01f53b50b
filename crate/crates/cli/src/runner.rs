//! Executes the configured analyses in declaration order and assembles the
//! report. Reports are deterministic for a fixed (config, seed) pair;
//! wall-clock timing goes to standard output only.

use serde::Serialize;
use serde_json::{json, Value};

use endosol::endo::{Cycle, DynamicalSystem, Point};
use endosol::error::EndoError;
use endosol::exact::{ExactComplex, RadicalSum};
use endosol::measure::{invariant_measure, InvariantMeasure};
use endosol::mra::{
    compute_h_c, correlation_residual, eval_scaling, h_c_path_sum_at, multiplicity, purity_decay,
    s0_isometry_residual, scaling_relation_residual, HcMethod,
};
use endosol::observable::Observable;
use endosol::ruelle::{
    averaging_decay, find_w_cycles, low_pass_residual, qmf_residual, uniform_transfer_weight,
    weight_from_filter, Filter,
};
use endosol::solenoid::enumerate_paths;

use crate::config::{
    build_complex, build_cycle, build_filter, build_observable, build_point, build_system,
    AnalysisConfig, ConfigError, ExperimentConfig,
};

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisRecord {
    pub name: String,
    pub pass: bool,
    pub summary: Value,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<Value>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub analyses: Vec<AnalysisRecord>,
    pub pass: bool,
}

pub fn radical_string(r: &RadicalSum) -> String {
    if r.is_zero() {
        return "0".into();
    }
    let mut parts = Vec::new();
    for (s, c) in r.terms() {
        if *s == 1 {
            parts.push(format!("{c}"));
        } else {
            parts.push(format!("{c}*sqrt({s})"));
        }
    }
    parts.join(" + ")
}

pub fn complex_string(v: &ExactComplex) -> String {
    if v.im.is_zero() {
        radical_string(&v.re)
    } else if v.re.is_zero() {
        format!("({})*i", radical_string(&v.im))
    } else {
        format!("{} + ({})*i", radical_string(&v.re), radical_string(&v.im))
    }
}

pub fn point_string(sys: &DynamicalSystem, x: &Point) -> String {
    match x {
        Point::Angle(a) => format!("{a}"),
        Point::Word { prefix, period } => {
            let s = sys.sft().expect("word points belong to shift systems");
            let lab = |w: &[usize]| w.iter().map(|&i| s.alphabet.label(i)).collect::<String>();
            format!("{}({})", lab(prefix), lab(period))
        }
    }
}

struct Ctx {
    sys: DynamicalSystem,
    filter: Option<Filter>,
    cycle: Option<Cycle>,
    rho: InvariantMeasure,
    seed: u64,
}

impl Ctx {
    fn filter(&self) -> Result<&Filter, EndoError> {
        self.filter
            .as_ref()
            .ok_or_else(|| EndoError::InvalidFilter("this analysis needs a filter".into()))
    }

    fn cycle(&self) -> Result<&Cycle, EndoError> {
        self.cycle
            .as_ref()
            .ok_or_else(|| EndoError::InvalidSystem("this analysis needs a cycle".into()))
    }
}

fn prepare(config: &ExperimentConfig, seed: u64) -> Result<Ctx, ConfigError> {
    let sys = build_system(&config.system)?;
    let filter = config.filter.as_ref().map(|f| build_filter(&sys, f)).transpose()?;
    let cycle = config.cycle.as_ref().map(|c| build_cycle(&sys, c)).transpose()?;
    let rho = invariant_measure(&sys, None).map_err(|e| ConfigError(e.to_string()))?;
    Ok(Ctx { sys, filter, cycle, rho, seed })
}

fn finish(
    a: &AnalysisConfig,
    result: Result<AnalysisRecord, ConvertedError>,
) -> Result<AnalysisRecord, ConfigError> {
    match result {
        Ok(r) => Ok(r),
        Err(ConvertedError::Config(e)) => Err(e),
        Err(ConvertedError::Endo(e)) => Ok(AnalysisRecord {
            name: a.name().into(),
            pass: false,
            summary: json!({ "error": e.to_string() }),
            table: Vec::new(),
        }),
    }
}

pub fn run(config: &ExperimentConfig, seed: u64) -> Result<Report, ConfigError> {
    let ctx = prepare(config, seed)?;
    let mut analyses = Vec::new();
    for a in &config.analyses {
        analyses.push(finish(a, run_analysis(&ctx, config, a))?);
    }
    let pass = analyses.iter().all(|r| r.pass);
    Ok(Report { seed, config: config.clone(), analyses, pass })
}

/// Same report as `run`: analyses execute on worker threads but records
/// keep declaration order, so the output is byte-identical.
pub fn run_parallel(config: &ExperimentConfig, seed: u64) -> Result<Report, ConfigError> {
    let ctx = prepare(config, seed)?;
    let results: Vec<Result<AnalysisRecord, ConvertedError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .analyses
            .iter()
            .map(|a| scope.spawn(|| run_analysis(&ctx, config, a)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("analysis worker panicked")).collect()
    });
    let mut analyses = Vec::new();
    for (a, result) in config.analyses.iter().zip(results) {
        analyses.push(finish(a, result)?);
    }
    let pass = analyses.iter().all(|r| r.pass);
    Ok(Report { seed, config: config.clone(), analyses, pass })
}

enum ConvertedError {
    Config(ConfigError),
    Endo(EndoError),
}

impl From<ConfigError> for ConvertedError {
    fn from(e: ConfigError) -> Self {
        ConvertedError::Config(e)
    }
}

impl From<EndoError> for ConvertedError {
    fn from(e: EndoError) -> Self {
        ConvertedError::Endo(e)
    }
}

fn run_analysis(
    ctx: &Ctx,
    config: &ExperimentConfig,
    a: &AnalysisConfig,
) -> Result<AnalysisRecord, ConvertedError> {
    let sys = &ctx.sys;
    let record = match a {
        AnalysisConfig::Qmf { tolerance } => {
            let residual = qmf_residual(sys, ctx.filter()?)?;
            AnalysisRecord {
                name: "qmf".into(),
                pass: residual <= *tolerance,
                summary: json!({ "residual": residual, "tolerance": tolerance }),
                table: Vec::new(),
            }
        }
        AnalysisConfig::LowPass { tolerance } => {
            let residual = low_pass_residual(sys, ctx.filter()?, ctx.cycle()?)?;
            AnalysisRecord {
                name: "low_pass".into(),
                pass: residual <= *tolerance,
                summary: json!({ "residual": residual, "tolerance": tolerance }),
                table: Vec::new(),
            }
        }
        AnalysisConfig::ScalingValues { m_max, bases, expect_zero_or_one } => {
            let filter = ctx.filter()?;
            let cycle = ctx.cycle()?;
            let mut table = Vec::new();
            let mut all_binary = true;
            let mut count = 0usize;
            for lit in bases {
                let x = build_point(sys, lit)?;
                for omega in enumerate_paths(sys, cycle, &x, *m_max)? {
                    let v = eval_scaling(sys, cycle, filter, &omega)?;
                    let exact_str = v.exact.as_ref().map(complex_string);
                    if let Some(e) = &v.exact {
                        if !(e.is_zero() || e.sub(&ExactComplex::one()).is_zero()) {
                            all_binary = false;
                        }
                    } else {
                        all_binary = false;
                    }
                    count += 1;
                    table.push(json!({
                        "base": point_string(sys, &x),
                        "labels": omega.labels,
                        "align": omega.align,
                        "value": [v.re, v.im],
                        "exact": exact_str,
                        "tail_bound": v.tail_bound,
                    }));
                }
            }
            let pass = !*expect_zero_or_one || all_binary;
            AnalysisRecord {
                name: "scaling_values".into(),
                pass,
                summary: json!({
                    "paths": count,
                    "all_values_zero_or_one": all_binary,
                }),
                table,
            }
        }
        AnalysisConfig::HC { m_max, depth, expect_constant } => {
            let filter = ctx.filter()?;
            let cycle = ctx.cycle()?;
            let fixed = compute_h_c(sys, cycle, filter, HcMethod::FixedPoint { depth: *depth })?;
            let mut pass = true;
            let mut routes_agree = true;
            let mut table = Vec::new();
            let mut max_tail = 0.0f64;
            match sys {
                DynamicalSystem::Sft(s) => {
                    let ps = compute_h_c(sys, cycle, filter, HcMethod::PathSum { m_max: *m_max })?;
                    routes_agree = ps.obs.sub(sys, &fixed.obs)?.is_zero();
                    max_tail = ps.tail_bound;
                    let d = ps.obs.depth().unwrap_or(1);
                    for w in s.admissible_words(d) {
                        let x = complete(s, &w).map_err(ConvertedError::Endo)?;
                        let v = ps.obs.eval(&x)?;
                        table.push(json!({
                            "word": w.iter().map(|&i| s.alphabet.label(i)).collect::<String>(),
                            "path_sum": complex_string(&v),
                            "fixed_point": complex_string(&fixed.obs.eval(&x)?),
                        }));
                    }
                }
                DynamicalSystem::Torus(_) => {
                    // spot-check the fixed point against pointwise path sums
                    for num in 0..8i64 {
                        let x = Point::angle(endosol::exact::rat_from(num, 8));
                        let (partial, tail) = h_c_path_sum_at(sys, cycle, filter, &x, *m_max)?;
                        let fp = fixed.obs.eval_f64(&x)?.0;
                        if (fp - partial).abs() > tail + 1e-9 {
                            routes_agree = false;
                        }
                        max_tail = max_tail.max(tail);
                        table.push(json!({
                            "x": format!("{num}/8"),
                            "path_sum": partial,
                            "fixed_point": fp,
                            "tail_bound": tail,
                        }));
                    }
                }
            }
            pass &= routes_agree;
            if let Some(c) = expect_constant {
                let want = Observable::constant(sys, build_complex(c)?);
                pass &= fixed.obs.sub(sys, &want)?.is_zero();
            }
            AnalysisRecord {
                name: "h_c".into(),
                pass,
                summary: json!({
                    "routes_agree": routes_agree,
                    "max_tail_bound": max_tail,
                }),
                table,
            }
        }
        AnalysisConfig::Correlation { f, m_max, tolerance } => {
            let f = build_observable(sys, f)?;
            let (residual, bound) =
                correlation_residual(sys, &ctx.rho, ctx.cycle()?, ctx.filter()?, &f, *m_max)?;
            AnalysisRecord {
                name: "correlation".into(),
                pass: residual <= bound.max(*tolerance),
                summary: json!({ "residual": residual, "tail_bound": bound }),
                table: Vec::new(),
            }
        }
        AnalysisConfig::Measure { depth, expect } => {
            let residual = ctx.rho.strong_invariance_residual(*depth);
            let mut pass = residual == endosol::exact::rat_int(0);
            let mut table = Vec::new();
            match sys {
                DynamicalSystem::Sft(s) => {
                    for d in 1..=*depth {
                        for w in s.admissible_words(d) {
                            let mass = ctx.rho.cylinder_mass(&w);
                            let key: String =
                                w.iter().map(|&i| s.alphabet.label(i)).collect();
                            if d == 1 || d == 2 {
                                table.push(json!({ "word": key, "mass": format!("{mass}") }));
                            }
                        }
                    }
                }
                DynamicalSystem::Torus(_) => {}
            }
            if let Some(want) = expect {
                for (key, val) in want {
                    let row = table
                        .iter()
                        .find(|r| r["word"] == json!(key))
                        .ok_or_else(|| ConfigError(format!("no cylinder {key:?} in table")))?;
                    if row["mass"] != json!(val) {
                        pass = false;
                    }
                }
            }
            AnalysisRecord {
                name: "measure".into(),
                pass,
                summary: json!({
                    "strong_invariance_residual": format!("{residual}"),
                    "depth": depth,
                }),
                table,
            }
        }
        AnalysisConfig::WCycles { p_max, tol, expect } => {
            let w = weight_from_filter(sys, ctx.filter()?)?;
            let cycles = find_w_cycles(sys, &w, *p_max, *tol)?;
            let found: Vec<Vec<String>> = cycles
                .iter()
                .map(|c| c.points().iter().map(|x| point_string(sys, x)).collect())
                .collect();
            let pass = match expect {
                Some(want) => {
                    let mut sorted = found.clone();
                    sorted.sort();
                    let mut want = want.clone();
                    want.sort();
                    sorted == want
                }
                None => true,
            };
            let table = found.iter().map(|c| json!({ "cycle": c })).collect();
            AnalysisRecord {
                name: "w_cycles".into(),
                pass,
                summary: json!({ "count": found.len() }),
                table,
            }
        }
        AnalysisConfig::ScalingRelation { m_max, bases, tolerance } => {
            let filter = ctx.filter()?;
            let cycle = ctx.cycle()?;
            let mut paths = Vec::new();
            for lit in bases {
                let x = build_point(sys, lit)?;
                paths.extend(enumerate_paths(sys, cycle, &x, *m_max)?);
            }
            let residual = scaling_relation_residual(sys, cycle, filter, &paths)?;
            AnalysisRecord {
                name: "scaling_relation".into(),
                pass: residual <= *tolerance,
                summary: json!({ "residual": residual, "paths": paths.len() }),
                table: Vec::new(),
            }
        }
        AnalysisConfig::S0Isometry { pairs, tolerance } => {
            let filter = ctx.filter()?;
            let h = Observable::constant(sys, ExactComplex::one());
            let mut table = Vec::new();
            let mut pass = true;
            for (i, (f, g)) in pairs.iter().enumerate() {
                let f = build_observable(sys, f)?;
                let g = build_observable(sys, g)?;
                let residual = s0_isometry_residual(sys, &ctx.rho, filter, &h, &f, &g)?;
                pass &= residual <= *tolerance;
                table.push(json!({ "pair": i, "residual": residual }));
            }
            AnalysisRecord {
                name: "s0_isometry".into(),
                pass,
                summary: json!({ "pairs": pairs.len() }),
                table,
            }
        }
        AnalysisConfig::PurityDecay { xi, k_max, samples, expect_rate, rate_rel_tol } => {
            let xi = build_observable(sys, xi)?;
            let report =
                purity_decay(sys, &ctx.rho, ctx.filter()?, None, &xi, *k_max, *samples, ctx.seed)?;
            let mut pass = true;
            if let Some(want) = expect_rate {
                match report.fitted_rate {
                    Some(rate) => pass = (rate - want).abs() / want <= *rate_rel_tol,
                    None => pass = false,
                }
            }
            let table = report
                .s
                .iter()
                .enumerate()
                .map(|(i, v)| json!({ "k": i + 1, "s_k": v }))
                .collect();
            AnalysisRecord {
                name: "purity_decay".into(),
                pass,
                summary: json!({
                    "fitted_rate": report.fitted_rate,
                    "hypothesis_violated": report.hypothesis_violated,
                }),
                table,
            }
        }
        AnalysisConfig::AveragingDecay { f, n_max, expect_ratio, ratio_tol } => {
            let f = build_observable(sys, f)?;
            let v = uniform_transfer_weight(sys);
            let d = averaging_decay(sys, &ctx.rho, &v, &f, *n_max)?;
            let mut table = Vec::new();
            for (i, val) in d.iter().enumerate() {
                let ratio = if i > 0 && d[i - 1] > 0.0 { Some(val / d[i - 1]) } else { None };
                table.push(json!({ "n": i + 1, "d_n": val, "ratio": ratio }));
            }
            let final_ratio = if d.len() >= 2 && d[d.len() - 2] > 0.0 {
                Some(d[d.len() - 1] / d[d.len() - 2])
            } else {
                None
            };
            let pass = match (expect_ratio, final_ratio) {
                (Some(want), Some(got)) => (got - want).abs() <= *ratio_tol,
                (Some(_), None) => false,
                (None, _) => true,
            };
            AnalysisRecord {
                name: "averaging_decay".into(),
                pass,
                summary: json!({ "final_ratio": final_ratio }),
                table,
            }
        }
        AnalysisConfig::Multiplicity { x, n_max, expect } => {
            let filter = ctx.filter()?;
            let cycle = ctx.cycle()?;
            let x = build_point(sys, x)?;
            let mut table = Vec::new();
            let mut counts = Vec::new();
            for n in 1..=*n_max {
                let (lo, hi) = multiplicity(sys, cycle, filter, &x, n)?;
                counts.push((lo, hi));
                table.push(json!({ "n": n, "lower": lo, "upper": hi }));
            }
            let pass = match expect {
                Some(want) => {
                    want.len() == counts.len()
                        && counts.iter().zip(want).all(|(&(lo, hi), &w)| lo == w && hi == w)
                }
                None => counts.iter().all(|&(lo, hi)| lo == hi),
            };
            AnalysisRecord {
                name: "multiplicity".into(),
                pass,
                summary: json!({ "x": point_string(sys, &x) }),
                table,
            }
        }
    };
    let _ = config;
    Ok(record)
}

/// Fill a word out to a periodic point when the word itself does not close
/// up: greedily append least admissible letters until a loop forms.
fn complete(s: &endosol::endo::SftSystem, w: &[usize]) -> Result<Point, EndoError> {
    let succ = |a: usize| (0..s.alphabet.size()).find(|&b| s.admissible(a, b)).unwrap();
    let mut chain = vec![*w.last().unwrap()];
    loop {
        let next = succ(*chain.last().unwrap());
        if let Some(pos) = chain.iter().position(|&c| c == next) {
            let prefix: Vec<usize> =
                w[..w.len() - 1].iter().chain(chain[..pos].iter()).cloned().collect();
            return Point::word(s, &prefix, &chain[pos..]);
        }
        chain.push(next);
    }
}

pub fn summary_lines(report: &Report) -> String {
    let mut out = String::new();
    for a in &report.analyses {
        let status = if a.pass { "pass" } else { "FAIL" };
        out.push_str(&format!("{:<18} {}\n", a.name, status));
    }
    out.push_str(&format!("overall            {}\n", if report.pass { "pass" } else { "FAIL" }));
    out
}

pub fn to_json(report: &Report) -> String {
    let mut buf = serde_json::to_string_pretty(report).expect("report serializes");
    buf.push('\n');
    buf
}
