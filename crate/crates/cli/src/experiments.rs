//! The nine experiments. Each one validates its params, runs fully in
//! memory, and returns the report files as bytes; nothing touches the
//! filesystem here. Summaries embed the config hash and library version,
//! and every rendered number is deterministic, so identical config and
//! seed give byte-identical reports.

use std::collections::{BTreeMap, BTreeSet};

use ergolab::abgroup::{AbGroup, FolnerScheme, GroupElement};
use ergolab::averages::{
    characteristic_compare_finite, ghk_seminorm, u2_fourier_identity, vdc_check,
};
use ergolab::cocycles::{cl_group, CLGroupElement, GroupExtension};
use ergolab::cyclo::ExactComplex;
use ergolab::nilhomog::{counterexample_f2, skew_limit_formula_compare, McConfig};
use ergolab::phases::Phase;
use ergolab::recurrence::{khintchine_scan, SyndeticityGap};
use ergolab::specext::{divisible_tower, verify_ab_set_identity};
use ergolab::systems::{Observable, TrigPoly};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::config::{self, err, ConfigError, Node};
use crate::report::{
    complex_json, complex_parts, csv, frac, json_bytes, no_symbols, phase_list, sig,
    standard_symbols,
};

pub struct RunContext {
    pub seed: Option<u64>,
    pub max_n: Option<u64>,
    pub tolerance: Option<f64>,
    pub threads: Option<u32>,
    pub config_sha256: String,
    pub version: &'static str,
}

pub struct Outcome {
    pub experiment: &'static str,
    pub pass: bool,
    /// File name and content, written by the caller only after the whole
    /// run has succeeded.
    pub files: Vec<(String, Vec<u8>)>,
}

pub fn run(root: &Value, ctx: &RunContext) -> Result<Outcome, ConfigError> {
    let node = Node::root(root);
    node.expect_keys(&["experiment", "seed", "params"])?;
    let exp_node = node.get("experiment")?;
    let exp = exp_node.str()?;
    let seed = match ctx.seed {
        Some(s) => s,
        None => match node.opt("seed") {
            Some(s) => s.u64()?,
            None => 0,
        },
    };
    let params = node.get("params")?;
    match exp {
        "limit-formula" => limit_formula(&params, seed, ctx),
        "khintchine" => khintchine(&params, seed, ctx),
        "counterexample" => counterexample(&params, seed, ctx),
        "seminorms" => seminorms(&params, seed, ctx),
        "cl-group" => cl_group_exp(&params, seed, ctx),
        "tower" => tower(&params, seed, ctx),
        "identity-b7" => identity_b7(&params, seed, ctx),
        "vdc" => vdc(&params, seed, ctx),
        "characteristic" => characteristic(&params, seed, ctx),
        other => Err(err(
            &exp_node.pointer,
            format!(
                "unknown experiment \"{other}\"; expected one of limit-formula, khintchine, \
                 counterexample, seminorms, cl-group, tower, identity-b7, vdc, characteristic"
            ),
        )),
    }
}

fn envelope(ctx: &RunContext, experiment: &str, seed: u64, pass: bool, payload: Map<String, Value>) -> Value {
    let mut m = Map::new();
    m.insert("config_sha256".into(), Value::String(ctx.config_sha256.clone()));
    m.insert("experiment".into(), Value::String(experiment.to_string()));
    m.insert("execution".into(), Value::String("serial".into()));
    m.insert("pass".into(), Value::Bool(pass));
    m.insert("seed".into(), json!(seed));
    m.insert("threads".into(), json!(ctx.threads.unwrap_or(1)));
    m.insert("version".into(), Value::String(ctx.version.to_string()));
    for (k, v) in payload {
        m.insert(k, v);
    }
    Value::Object(m)
}

fn seeded_observable(rng: &mut ChaCha8Rng, n: usize) -> Observable {
    let i_unit = ExactComplex::from_phase(&Phase::from_rational(1, 4).unwrap());
    let values = (0..n)
        .map(|_| {
            let re = ExactComplex::from_rational_i64(rng.random_range(-2..=2), 2);
            let im = ExactComplex::from_rational_i64(rng.random_range(-2..=2), 2);
            re.add(&im.mul(&i_unit))
        })
        .collect();
    Observable { values }
}

fn parse_observable(node: &Node, n: usize) -> Result<Observable, ConfigError> {
    let items = node.array()?;
    if items.len() != n {
        return Err(err(&node.pointer, format!("expected {n} value pairs, got {}", items.len())));
    }
    let i_unit = ExactComplex::from_phase(&Phase::from_rational(1, 4).unwrap());
    let mut values = Vec::with_capacity(n);
    for item in &items {
        let pair = item.array()?;
        if pair.len() != 2 {
            return Err(err(&item.pointer, "expected a [re, im] pair of rational strings"));
        }
        let re = pair[0].rational()?;
        let im = pair[1].rational()?;
        let re = ExactComplex::from_rational_i64(*re.numer(), *re.denom());
        let im = ExactComplex::from_rational_i64(*im.numer(), *im.denom());
        values.push(re.add(&im.mul(&i_unit)));
    }
    Ok(Observable { values })
}

fn splitmix(mut h: u64) -> u64 {
    h = h.wrapping_add(0x9E3779B97F4A7C15);
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94D049BB133111EB);
    h ^ (h >> 31)
}

fn unit_interval(h: u64) -> f64 {
    ((h >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
}

fn terms_json(p: &TrigPoly) -> Value {
    let vals = standard_symbols();
    Value::Array(
        p.terms
            .iter()
            .map(|(m, c)| {
                let mut t = Map::new();
                t.insert("m".into(), json!(m));
                t.insert("coeff".into(), complex_json(c, &vals));
                Value::Object(t)
            })
            .collect(),
    )
}

fn limit_formula(params: &Node, seed: u64, ctx: &RunContext) -> Result<Outcome, ConfigError> {
    params.expect_keys(&["model", "pattern", "observables", "mc_samples"])?;
    let model_node = params.get("model")?;
    if model_node.str()? != "skew" {
        return Err(err(&model_node.pointer, "only the \"skew\" model is supported"));
    }
    let pat_node = params.get("pattern")?;
    let cs = pat_node.i64_array()?;
    if cs.is_empty() || cs.len() > 4 || cs.iter().any(|&c| c == 0) {
        return Err(err(&pat_node.pointer, "pattern needs 1 to 4 nonzero coefficients"));
    }
    let obs_node = params.get("observables")?;
    let obs_items = obs_node.array()?;
    if obs_items.len() != cs.len() {
        return Err(err(
            &obs_node.pointer,
            format!("expected {} frequency vectors, one per pattern entry", cs.len()),
        ));
    }
    let mut ms = Vec::new();
    for item in &obs_items {
        let m = item.i64_array()?;
        if m.len() != 2 {
            return Err(err(&item.pointer, "frequency vectors have 2 entries"));
        }
        ms.push(m);
    }
    let mc_samples = match params.opt("mc_samples") {
        Some(n) => n.u64()?,
        None => 100_000,
    };
    let tolerance = ctx.tolerance.unwrap_or(1e-2);

    let fs: Vec<TrigPoly> = ms.iter().map(|m| TrigPoly::character(m.clone())).collect();
    let mc_cfg = McConfig { samples: mc_samples, seed, ..Default::default() };
    let mc = if mc_samples > 0 { Some(&mc_cfg) } else { None };
    let rep = skew_limit_formula_compare(&cs, &fs, mc)
        .map_err(|e| err(&params.pointer, format!("{e:?}")))?;
    let residual_ok = rep.mc_residual.map(|r| r <= tolerance).unwrap_or(true);
    let pass = rep.equal && residual_ok;

    let mut payload = Map::new();
    payload.insert("equal".into(), Value::Bool(rep.equal));
    payload.insert("lhs_terms".into(), terms_json(&rep.lhs));
    payload.insert(
        "mc_residual".into(),
        rep.mc_residual.map(|r| Value::String(sig(r))).unwrap_or(Value::Null),
    );
    payload.insert("mc_samples".into(), json!(mc_samples));
    payload.insert("model".into(), json!("skew"));
    payload.insert("observables".into(), json!(ms));
    payload.insert("pattern".into(), json!(cs));
    payload.insert("rhs_terms".into(), terms_json(&rep.rhs));
    payload.insert("tolerance".into(), Value::String(sig(tolerance)));
    let summary = envelope(ctx, "limit-formula", seed, pass, payload);

    let vals = standard_symbols();
    let mut rows = vec![vec![
        "side".into(),
        "m1".into(),
        "m2".into(),
        "re".into(),
        "im".into(),
    ]];
    for (side, poly) in [("lhs", &rep.lhs), ("rhs", &rep.rhs)] {
        for (m, c) in &poly.terms {
            let (re, im) = complex_parts(c, &vals);
            rows.push(vec![side.into(), m[0].to_string(), m[1].to_string(), sig(re), sig(im)]);
        }
    }
    let mut keys: BTreeSet<Vec<i64>> = rep.lhs.terms.keys().cloned().collect();
    keys.extend(rep.rhs.terms.keys().cloned());
    let mut plot = vec![vec!["term_index".into(), "lhs_abs".into(), "rhs_abs".into()]];
    for (i, k) in keys.iter().enumerate() {
        let a = |p: &TrigPoly| {
            p.terms
                .get(k)
                .map(|c| {
                    let (re, im) = complex_parts(c, &vals);
                    (re * re + im * im).sqrt()
                })
                .unwrap_or(0.0)
        };
        plot.push(vec![i.to_string(), sig(a(&rep.lhs)), sig(a(&rep.rhs))]);
    }

    Ok(Outcome {
        experiment: "limit-formula",
        pass,
        files: vec![
            ("limit_formula_summary.json".into(), json_bytes(&summary)),
            ("limit_formula_terms.csv".into(), csv(&rows)),
            ("limit_formula_plot.csv".into(), csv(&plot)),
        ],
    })
}

fn gap_json(g: &SyndeticityGap) -> Value {
    match g {
        SyndeticityGap::FiniteCover { cover_size } => {
            json!({"kind": "finite_cover", "cover_size": cover_size})
        }
        SyndeticityGap::MaxGap { gap } => json!({"kind": "max_gap", "gap": gap}),
        SyndeticityGap::Empty => json!({"kind": "empty"}),
    }
}

fn khintchine(params: &Node, seed: u64, ctx: &RunContext) -> Result<Outcome, ConfigError> {
    params.expect_keys(&["system", "a_set", "a", "b", "epsilon"])?;
    let sys = config::system(&params.get("system")?, ctx.max_n)?;
    let set_node = params.get("a_set")?;
    let a_set = set_node.usize_array()?;
    if let Some(&bad) = a_set.iter().find(|&&x| x >= sys.size()) {
        return Err(err(
            &set_node.pointer,
            format!("point index {bad} is out of range for a {}-point system", sys.size()),
        ));
    }
    let a = params.get("a")?.i64()?;
    let b = params.get("b")?.i64()?;
    let eps = params.get("epsilon")?.rational()?;
    let rep = khintchine_scan(&sys, &a_set, a, b, eps)
        .map_err(|e| err(&params.pointer, format!("{e:?}")))?;
    let good: BTreeSet<&GroupElement> = rep.good.iter().collect();
    let zero_good = rep.good.iter().any(|g| sys.acting().is_zero(g));
    let pass = !rep.good.is_empty() && zero_good;

    let mut payload = Map::new();
    payload.insert("a".into(), json!(a));
    payload.insert("b".into(), json!(b));
    payload.insert("bound".into(), Value::String(frac(rep.bound)));
    if let Some(c) = &rep.components {
        payload.insert(
            "components".into(),
            json!({
                "aggregation_exact": c.aggregation_exact,
                "densities": c.densities.iter().map(|d| frac(*d)).collect::<Vec<_>>(),
                "jensen_average": frac(c.jensen_average),
                "weights": c.weights.iter().map(|w| frac(*w)).collect::<Vec<_>>(),
            }),
        );
    }
    payload.insert("density".into(), Value::String(frac(rep.density)));
    payload.insert("epsilon".into(), Value::String(frac(rep.epsilon)));
    payload.insert("ergodic".into(), Value::Bool(rep.ergodic));
    payload.insert("gap".into(), gap_json(&rep.gap));
    payload.insert(
        "good".into(),
        Value::Array(
            rep.good.iter().take(64).map(|g| json!(g.coords().to_vec())).collect(),
        ),
    );
    payload.insert("good_contains_zero".into(), Value::Bool(zero_good));
    payload.insert("good_count".into(), json!(rep.good.len()));
    payload.insert(
        "index_report".into(),
        Value::Array(
            rep.index_report
                .iter()
                .map(|(m, idx)| json!({"index": idx, "m": m}))
                .collect(),
        ),
    );
    payload.insert("index_ok".into(), Value::Bool(rep.index_ok));
    let summary = envelope(ctx, "khintchine", seed, pass, payload);

    let mut rows = vec![vec!["g".into(), "correlation".into(), "good".into()]];
    let mut plot = vec![vec!["g_index".into(), "correlation".into()]];
    for (i, (g, corr)) in rep.correlations.iter().enumerate() {
        rows.push(vec![g.to_string(), frac(*corr), good.contains(g).to_string()]);
        plot.push(vec![
            i.to_string(),
            sig(*corr.numer() as f64 / *corr.denom() as f64),
        ]);
    }

    Ok(Outcome {
        experiment: "khintchine",
        pass,
        files: vec![
            ("khintchine_summary.json".into(), json_bytes(&summary)),
            ("khintchine_correlations.csv".into(), csv(&rows)),
            ("khintchine_plot.csv".into(), csv(&plot)),
        ],
    })
}

fn counterexample(params: &Node, seed: u64, ctx: &RunContext) -> Result<Outcome, ConfigError> {
    params.expect_keys(&["d"])?;
    let d_node = params.get("d")?;
    let d = d_node.usize()?;
    if !(2..=10).contains(&d) {
        return Err(err(&d_node.pointer, "d must be between 2 and 10"));
    }
    if let Some(cap) = ctx.max_n {
        let size = (1u64 << d) * 4;
        if size > cap {
            return Err(err(
                &d_node.pointer,
                format!("system has {size} points, above the --max-N cap of {cap}"),
            ));
        }
    }
    let rep = counterexample_f2(d).map_err(|e| err(&d_node.pointer, format!("{e:?}")))?;
    let pass = rep.lhs_equals_f2
        && rep.rhs_is_zero
        && rep.rhs_gamma_invariant
        && rep.discrepancy_sup == 1.0;

    let mut payload = Map::new();
    payload.insert("d".into(), json!(d));
    payload.insert("discrepancy_sup".into(), Value::String(sig(rep.discrepancy_sup)));
    payload.insert("ergodic_components".into(), json!(rep.ergodic_components));
    payload.insert("lhs_equals_f2".into(), Value::Bool(rep.lhs_equals_f2));
    payload.insert("rhs_gamma_invariant".into(), Value::Bool(rep.rhs_gamma_invariant));
    payload.insert("rhs_is_zero".into(), Value::Bool(rep.rhs_is_zero));
    let summary = envelope(ctx, "counterexample", seed, pass, payload);

    let vals = no_symbols();
    let mut rows = vec![vec![
        "point".into(),
        "base".into(),
        "fiber".into(),
        "lhs_re".into(),
        "lhs_im".into(),
        "rhs_re".into(),
        "rhs_im".into(),
        "abs_gap".into(),
    ]];
    let mut plot = vec![vec!["point".into(), "abs_gap".into()]];
    for p in 0..rep.lhs.values.len() {
        let (lr, li) = complex_parts(&rep.lhs.values[p], &vals);
        let (rr, ri) = complex_parts(&rep.rhs.values[p], &vals);
        let gap = ((lr - rr).powi(2) + (li - ri).powi(2)).sqrt();
        rows.push(vec![
            p.to_string(),
            (p / 4).to_string(),
            (p % 4).to_string(),
            sig(lr),
            sig(li),
            sig(rr),
            sig(ri),
            sig(gap),
        ]);
        plot.push(vec![p.to_string(), sig(gap)]);
    }

    Ok(Outcome {
        experiment: "counterexample",
        pass,
        files: vec![
            ("counterexample_summary.json".into(), json_bytes(&summary)),
            ("counterexample_pointwise.csv".into(), csv(&rows)),
            ("counterexample_plot.csv".into(), csv(&plot)),
        ],
    })
}

fn seminorms(params: &Node, seed: u64, ctx: &RunContext) -> Result<Outcome, ConfigError> {
    params.expect_keys(&["system", "k", "random_observables", "observable"])?;
    let sys_node = params.get("system")?;
    let sys = config::system(&sys_node, ctx.max_n)?;
    let k_max = match params.opt("k") {
        Some(k) => k.usize()?,
        None => 3,
    };
    if !(1..=3).contains(&k_max) {
        return Err(err(&params.get("k")?.pointer, "k must be 1, 2 or 3"));
    }
    let size_cap = match k_max {
        3 => 16,
        2 => 64,
        _ => 4096,
    };
    if sys.size() > size_cap {
        return Err(err(
            &sys_node.pointer,
            format!("{} points is too large for k={k_max} seminorms (cap {size_cap})", sys.size()),
        ));
    }
    let count = match params.opt("random_observables") {
        Some(c) => c.usize()?,
        None => 5,
    };
    if count > 1000 {
        return Err(err(&params.get("random_observables")?.pointer, "at most 1000 observables"));
    }
    let mut observables: Vec<(String, Observable)> = Vec::new();
    if let Some(obs) = params.opt("observable") {
        observables.push(("given".into(), parse_observable(&obs, sys.size())?));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        observables.push((format!("random{i}"), seeded_observable(&mut rng, sys.size())));
    }
    if observables.is_empty() {
        return Err(err(&params.pointer, "no observables: give one or set random_observables > 0"));
    }

    let fourier_possible = sys.is_ergodic() && k_max >= 2;
    let vals = no_symbols();
    let mut rows = vec![vec![
        "observable".into(),
        "k".into(),
        "power_re".into(),
        "power_im".into(),
        "power_exact".into(),
        "norm".into(),
        "agree".into(),
        "fourier_agree".into(),
    ]];
    let mut plot = vec![vec!["k".into(), "norm".into()]];
    let mut all_agree = true;
    let mut all_fourier = true;
    for (label, f) in &observables {
        for k in 1..=k_max {
            let rep = ghk_seminorm(&sys, f, k)
                .map_err(|e| err(&params.pointer, format!("{e:?}")))?;
            all_agree &= rep.agree;
            let fourier = if k == 2 && fourier_possible {
                let fr = u2_fourier_identity(&sys, f)
                    .map_err(|e| err(&params.pointer, format!("{e:?}")))?;
                all_fourier &= fr.agree;
                fr.agree.to_string()
            } else {
                String::new()
            };
            let (re, im) = complex_parts(&rep.power_cubic, &vals);
            let exact = rep
                .power_cubic
                .rational_value()
                .map(|q| crate::report::big_frac(&q))
                .unwrap_or_default();
            let norm = rep.norm.map(sig).unwrap_or_default();
            rows.push(vec![
                label.clone(),
                k.to_string(),
                sig(re),
                sig(im),
                exact,
                norm.clone(),
                rep.agree.to_string(),
                fourier,
            ]);
            plot.push(vec![k.to_string(), norm]);
        }
    }
    let pass = all_agree && all_fourier;

    let mut payload = Map::new();
    payload.insert("all_agree".into(), Value::Bool(all_agree));
    payload.insert(
        "all_fourier_agree".into(),
        if fourier_possible { Value::Bool(all_fourier) } else { Value::Null },
    );
    payload.insert("k".into(), json!(k_max));
    payload.insert("observables".into(), json!(observables.len()));
    payload.insert("system_size".into(), json!(sys.size()));
    let summary = envelope(ctx, "seminorms", seed, pass, payload);

    Ok(Outcome {
        experiment: "seminorms",
        pass,
        files: vec![
            ("seminorms_summary.json".into(), json_bytes(&summary)),
            ("seminorms_table.csv".into(), csv(&rows)),
            ("seminorms_plot.csv".into(), csv(&plot)),
        ],
    })
}

fn element_order(e: &CLGroupElement, id: &CLGroupElement, ext: &GroupExtension) -> u32 {
    let mut acc = e.clone();
    let mut k = 1u32;
    while &acc != id && k <= 1024 {
        acc = acc.compose(e, ext);
        k += 1;
    }
    k
}

fn cl_group_exp(params: &Node, seed: u64, ctx: &RunContext) -> Result<Outcome, ConfigError> {
    params.expect_keys(&["d"])?;
    let d = match params.opt("d") {
        Some(n) => n.usize()?,
        None => 2,
    };
    if !(2..=4).contains(&d) {
        return Err(err(&params.get("d")?.pointer, "d must be 2, 3 or 4 (group cap)"));
    }
    if let Some(cap) = ctx.max_n {
        let size = (1u64 << d) * 4;
        if size > cap {
            return Err(err(
                &params.pointer,
                format!("extension has {size} points, above the --max-N cap of {cap}"),
            ));
        }
    }
    let z = AbGroup::cyclic_power(2, d);
    let fiber = AbGroup::cyclic(4);
    let shifts: Vec<GroupElement> = (0..d).map(|i| z.generator(i)).collect();
    let zs = z.elements().map_err(|e| err(&params.pointer, format!("{e:?}")))?;
    let tables: Vec<Vec<GroupElement>> = (0..d)
        .map(|i| {
            zs.iter()
                .map(|ze| fiber.from_coords(&[1 + 2 * ze.coords()[i]]).unwrap())
                .collect()
        })
        .collect();
    let ext = GroupExtension::new(&z, &z, &shifts, &fiber, tables)
        .map_err(|e| err(&params.pointer, format!("{e:?}")))?;
    let rep = cl_group(&ext).map_err(|e| err(&params.pointer, format!("{e:?}")))?;
    let members_verified = rep.elements.iter().all(|e| e.is_member(&ext));
    let verticals = rep
        .elements
        .iter()
        .filter(|e| z.is_zero(&e.s) && e.f.iter().all(|v| *v == e.f[0]))
        .count();
    let pass = rep.transitive
        && rep.two_step
        && members_verified
        && rep.commutator_invariants == vec![2];

    let mut payload = Map::new();
    payload.insert("commutator_invariants".into(), json!(rep.commutator_invariants));
    payload.insert("commutator_size".into(), json!(rep.commutator_size));
    payload.insert("constant_verticals".into(), json!(verticals));
    payload.insert("d".into(), json!(d));
    payload.insert("element_count".into(), json!(rep.elements.len()));
    payload.insert("members_verified".into(), Value::Bool(members_verified));
    payload.insert("orbit_size".into(), json!(rep.orbit_size));
    payload.insert("stabilizer_size".into(), json!(rep.stabilizer.len()));
    payload.insert("transitive".into(), Value::Bool(rep.transitive));
    payload.insert("two_step".into(), Value::Bool(rep.two_step));
    let summary = envelope(ctx, "cl-group", seed, pass, payload);

    let id = CLGroupElement::identity(&ext);
    let mut rows = vec![vec!["index".into(), "s".into(), "f".into(), "order".into()]];
    let mut plot = vec![vec!["index".into(), "order".into()]];
    for (i, e) in rep.elements.iter().enumerate() {
        let f_join = e.f.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("|");
        let ord = element_order(e, &id, &ext);
        rows.push(vec![i.to_string(), e.s.to_string(), f_join, ord.to_string()]);
        plot.push(vec![i.to_string(), ord.to_string()]);
    }

    Ok(Outcome {
        experiment: "cl-group",
        pass,
        files: vec![
            ("cl_group_summary.json".into(), json_bytes(&summary)),
            ("cl_group_elements.csv".into(), csv(&rows)),
            ("cl_group_plot.csv".into(), csv(&plot)),
        ],
    })
}

fn tower(params: &Node, seed: u64, ctx: &RunContext) -> Result<Outcome, ConfigError> {
    params.expect_keys(&["system", "depth", "roots"])?;
    let sys = config::system(&params.get("system")?, ctx.max_n)?;
    let depth_node = params.get("depth")?;
    let depth = depth_node.usize()?;
    if !(1..=6).contains(&depth) {
        return Err(err(&depth_node.pointer, "depth must be between 1 and 6"));
    }
    let roots = match params.opt("roots") {
        Some(r) => r.u64_array()?,
        None => vec![2],
    };
    if roots.is_empty() || roots.iter().any(|&n| n < 2) {
        return Err(err(&params.get("roots")?.pointer, "roots must all be at least 2"));
    }
    let rep = divisible_tower(&sys, depth, &roots)
        .map_err(|e| err(&params.pointer, format!("{e:?}")))?;
    let pass = rep.stages.iter().all(|s| s.ergodic)
        && rep.stages.iter().skip(1).all(|s| s.prior_spectrum_rooted);

    let stages_json: Vec<Value> = rep
        .stages
        .iter()
        .map(|s| {
            json!({
                "ergodic": s.ergodic,
                "group": s.group,
                "new_roots": s.new_roots.iter().map(|(lam, root)| json!({
                    "lambda": phase_list(lam),
                    "root": phase_list(root),
                })).collect::<Vec<_>>(),
                "prior_spectrum_rooted": s.prior_spectrum_rooted,
                "size": s.size,
                "stage": s.stage,
            })
        })
        .collect();
    let mut payload = Map::new();
    payload.insert("depth".into(), json!(depth));
    payload.insert("roots".into(), json!(roots));
    payload.insert("stages".into(), Value::Array(stages_json));
    payload.insert("truncation_note".into(), Value::String(rep.truncation_note.to_string()));
    let summary = envelope(ctx, "tower", seed, pass, payload);

    let mut rows = vec![vec![
        "stage".into(),
        "size".into(),
        "group".into(),
        "new_roots".into(),
        "prior_spectrum_rooted".into(),
        "ergodic".into(),
    ]];
    let mut plot = vec![vec!["stage".into(), "size".into()]];
    for s in &rep.stages {
        let group = s.group.iter().map(u64::to_string).collect::<Vec<_>>().join("x");
        rows.push(vec![
            s.stage.to_string(),
            s.size.to_string(),
            group,
            s.new_roots.len().to_string(),
            s.prior_spectrum_rooted.to_string(),
            s.ergodic.to_string(),
        ]);
        plot.push(vec![s.stage.to_string(), s.size.to_string()]);
    }

    Ok(Outcome {
        experiment: "tower",
        pass,
        files: vec![
            ("tower_summary.json".into(), json_bytes(&summary)),
            ("tower_stages.csv".into(), csv(&rows)),
            ("tower_plot.csv".into(), csv(&plot)),
        ],
    })
}

fn identity_b7(params: &Node, seed: u64, ctx: &RunContext) -> Result<Outcome, ConfigError> {
    params.expect_keys(&["n", "a", "b"])?;
    let n_node = params.get("n")?;
    let n = n_node.u64()?;
    if n == 0 {
        return Err(err(&n_node.pointer, "group order must be at least 1"));
    }
    if let Some(cap) = ctx.max_n {
        if n > cap {
            return Err(err(&n_node.pointer, format!("n exceeds the --max-N cap of {cap}")));
        }
    }
    let a = params.get("a")?.i64()?;
    let b = params.get("b")?.i64()?;
    let rep = verify_ab_set_identity(&AbGroup::cyclic(n), a, b)
        .map_err(|e| err(&n_node.pointer, format!("{e:?}")))?;
    let pass = rep.equal || !rep.hypotheses_hold;

    let mut payload = Map::new();
    payload.insert("a".into(), json!(a));
    payload.insert("a_count".into(), json!(rep.a_count));
    payload.insert("a_subset_of_b".into(), Value::Bool(rep.a_subset_of_b));
    payload.insert("b".into(), json!(b));
    payload.insert("b_count".into(), json!(rep.b_count));
    payload.insert("b_subset_of_a".into(), Value::Bool(rep.b_subset_of_a));
    payload.insert("coprime".into(), Value::Bool(rep.coprime));
    payload.insert("divisible_by_a_b_ab_ba".into(), json!(rep.divisible));
    payload.insert("equal".into(), Value::Bool(rep.equal));
    payload.insert("hypotheses_hold".into(), Value::Bool(rep.hypotheses_hold));
    payload.insert("n".into(), json!(n));
    payload.insert("witnesses".into(), json!(rep.witnesses));
    let summary = envelope(ctx, "identity-b7", seed, pass, payload);

    let rows = vec![
        vec!["set".into(), "count".into()],
        vec!["A".into(), rep.a_count.to_string()],
        vec!["B".into(), rep.b_count.to_string()],
    ];
    let plot = vec![
        vec!["set_index".into(), "count".into()],
        vec!["0".into(), rep.a_count.to_string()],
        vec!["1".into(), rep.b_count.to_string()],
    ];

    Ok(Outcome {
        experiment: "identity-b7",
        pass,
        files: vec![
            ("identity_b7_summary.json".into(), json_bytes(&summary)),
            ("identity_b7_counts.csv".into(), csv(&rows)),
            ("identity_b7_plot.csv".into(), csv(&plot)),
        ],
    })
}

fn vdc(params: &Node, seed: u64, ctx: &RunContext) -> Result<Outcome, ConfigError> {
    params.expect_keys(&["families", "dim", "radii", "m_radius", "scheme", "offsets"])?;
    let families = match params.opt("families") {
        Some(f) => f.usize()?,
        None => 20,
    };
    if families == 0 || families > 10_000 {
        return Err(err(&params.get("families")?.pointer, "families must be in 1..=10000"));
    }
    let dim = match params.opt("dim") {
        Some(d) => d.usize()?,
        None => 3,
    };
    if !(1..=16).contains(&dim) {
        return Err(err(&params.get("dim")?.pointer, "dim must be in 1..=16"));
    }
    let radii = match params.opt("radii") {
        Some(r) => r.u64_array()?,
        None => vec![4, 8, 16],
    };
    if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) || radii.last().copied().unwrap_or(0) > 10_000 {
        return Err(err(
            &params.get("radii")?.pointer,
            "radii must be strictly increasing and at most 10000",
        ));
    }
    let m_radius = match params.opt("m_radius") {
        Some(m) => m.u64()?,
        None => 4,
    };
    let scheme = match params.opt("scheme") {
        None => FolnerScheme::Box,
        Some(s) => match s.str()? {
            "box" => FolnerScheme::Box,
            "shifted-box" => {
                let offs = params.get("offsets")?.i64_array()?;
                if offs.len() != 1 {
                    return Err(err(
                        &params.get("offsets")?.pointer,
                        "offsets must have one entry for the rank-1 group",
                    ));
                }
                FolnerScheme::ShiftedBox(offs)
            }
            other => return Err(err(&s.pointer, format!("unknown scheme \"{other}\""))),
        },
    };
    let tolerance = ctx.tolerance.unwrap_or(1e-9);

    let group = AbGroup::free(1);
    let mut fam_rows = vec![vec!["family".into(), "slack".into(), "pass".into()]];
    let mut stage_rows = vec![vec![
        "family".into(),
        "radius".into(),
        "raw_norm_sq".into(),
        "smoothed_norm_sq".into(),
        "corr_bound".into(),
        "stage_slack".into(),
    ]];
    let mut plot = vec![vec!["family".into(), "slack".into()]];
    let mut worst = f64::INFINITY;
    let mut all_pass = true;
    for family in 0..families {
        let fam_seed = splitmix(seed ^ ((family as u64) << 32));
        let xs = move |g: &GroupElement| -> Vec<(f64, f64)> {
            (0..dim)
                .map(|j| {
                    let key =
                        splitmix(fam_seed ^ splitmix((g.coords()[0] as u64) ^ ((j as u64) << 40)));
                    (unit_interval(key) / dim as f64, unit_interval(splitmix(key)) / dim as f64)
                })
                .collect()
        };
        let rep = vdc_check(&group, &xs, &radii, m_radius, &scheme)
            .map_err(|e| err(&params.pointer, format!("{e:?}")))?;
        let ok = rep.pass && rep.slack >= -tolerance;
        all_pass &= ok;
        worst = worst.min(rep.slack);
        fam_rows.push(vec![family.to_string(), sig(rep.slack), ok.to_string()]);
        plot.push(vec![family.to_string(), sig(rep.slack)]);
        for st in &rep.stages {
            stage_rows.push(vec![
                family.to_string(),
                st.radius.to_string(),
                sig(st.raw_norm_sq),
                sig(st.smoothed_norm_sq),
                sig(st.corr_bound),
                sig(st.corr_bound - st.smoothed_norm_sq),
            ]);
        }
    }

    let mut payload = Map::new();
    payload.insert("dim".into(), json!(dim));
    payload.insert("families".into(), json!(families));
    payload.insert("m_radius".into(), json!(m_radius));
    payload.insert("radii".into(), json!(radii));
    payload.insert(
        "scheme".into(),
        match &scheme {
            FolnerScheme::Box => json!("box"),
            FolnerScheme::ShiftedBox(offs) => json!({"offsets": offs, "shifted-box": true}),
        },
    );
    payload.insert("tolerance".into(), Value::String(sig(tolerance)));
    payload.insert("worst_slack".into(), Value::String(sig(worst)));
    let summary = envelope(ctx, "vdc", seed, all_pass, payload);

    Ok(Outcome {
        experiment: "vdc",
        pass: all_pass,
        files: vec![
            ("vdc_summary.json".into(), json_bytes(&summary)),
            ("vdc_families.csv".into(), csv(&fam_rows)),
            ("vdc_stages.csv".into(), csv(&stage_rows)),
            ("vdc_plot.csv".into(), csv(&plot)),
        ],
    })
}

fn characteristic(params: &Node, seed: u64, ctx: &RunContext) -> Result<Outcome, ConfigError> {
    params.expect_keys(&["system", "a", "b", "arity", "random_observables", "radii"])?;
    let sys_node = params.get("system")?;
    let sys = config::system(&sys_node, ctx.max_n)?;
    let a = params.get("a")?.i64()?;
    let b = params.get("b")?.i64()?;
    if a == 0 || b == 0 || a == b {
        return Err(err(&params.pointer, "need nonzero a and b with a != b"));
    }
    let arity = match params.opt("arity") {
        Some(x) => x.usize()?,
        None => 2,
    };
    if !(2..=3).contains(&arity) {
        return Err(err(&params.get("arity")?.pointer, "arity must be 2 or 3"));
    }
    let size_cap = if arity == 3 { 64 } else { 256 };
    if sys.size() > size_cap {
        return Err(err(
            &sys_node.pointer,
            format!("{} points is too large for arity {arity} (cap {size_cap})", sys.size()),
        ));
    }
    let trials = match params.opt("random_observables") {
        Some(c) => c.usize()?,
        None => 3,
    };
    if trials == 0 || trials > 1000 {
        return Err(err(
            &params.get("random_observables")?.pointer,
            "random_observables must be in 1..=1000",
        ));
    }
    let radii = match params.opt("radii") {
        Some(r) => r.u64_array()?,
        None => vec![2, 4, 8],
    };
    if radii.is_empty() {
        return Err(err(&params.get("radii")?.pointer, "radii must be nonempty"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![vec!["trial".into(), "radius".into(), "window_discrepancy".into()]];
    let mut per_radius: BTreeMap<u64, f64> = BTreeMap::new();
    let mut order = 0usize;
    let mut projection_identity_all = true;
    let mut exact_zero_all = true;
    let mut max_disc: f64 = 0.0;
    for t in 0..trials {
        let fs: Vec<Observable> =
            (0..arity).map(|_| seeded_observable(&mut rng, sys.size())).collect();
        let rep = characteristic_compare_finite(&sys, a, b, &fs, &radii, &FolnerScheme::Box)
            .map_err(|e| err(&params.pointer, format!("{e:?}")))?;
        order = rep.order;
        projection_identity_all &= rep.projection_is_identity;
        exact_zero_all &= rep.exact_zero;
        max_disc = max_disc.max(rep.max_discrepancy);
        for (r, d) in &rep.window_discrepancy {
            rows.push(vec![t.to_string(), r.to_string(), sig(*d)]);
            let e = per_radius.entry(*r).or_insert(0.0);
            *e = e.max(*d);
        }
    }
    let pass = exact_zero_all;

    let mut payload = Map::new();
    payload.insert("a".into(), json!(a));
    payload.insert("arity".into(), json!(arity));
    payload.insert("b".into(), json!(b));
    payload.insert("exact_zero".into(), Value::Bool(exact_zero_all));
    payload.insert("factor_order".into(), json!(order));
    payload.insert("max_window_discrepancy".into(), Value::String(sig(max_disc)));
    payload.insert("projection_is_identity".into(), Value::Bool(projection_identity_all));
    payload.insert("system_size".into(), json!(sys.size()));
    payload.insert("trials".into(), json!(trials));
    let summary = envelope(ctx, "characteristic", seed, pass, payload);

    let mut plot = vec![vec!["radius".into(), "max_window_discrepancy".into()]];
    for (r, d) in &per_radius {
        plot.push(vec![r.to_string(), sig(*d)]);
    }

    Ok(Outcome {
        experiment: "characteristic",
        pass,
        files: vec![
            ("characteristic_summary.json".into(), json_bytes(&summary)),
            ("characteristic_windows.csv".into(), csv(&rows)),
            ("characteristic_plot.csv".into(), csv(&plot)),
        ],
    })
}
