use amenable_core::entropy::{self, EntropyCurve};
use amenable_core::ldp::{self, ProductMeasureFamily, Thm3Config};
use amenable_core::shift::{self, Bernoulli, MeasureModel, ShiftSystem};
use amenable_core::tiling::{self, TileFamily, TilingFaults};
use amenable_core::verify::{self, Faults, Level};
use amenable_core::{group, FiniteSubset, GroupModel};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{config_err, section, EntropyKind, Loaded, SystemKind};
use crate::CliError;

/// What a pipeline hands back for the report writer.
pub struct Outcome {
    pub result: Value,
    pub csv: String,
    /// Every internal certificate passed.
    pub passed: bool,
    /// Human-readable lines for stdout.
    pub summary: Vec<String>,
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("report types serialize")
}

pub fn folner(cfg: &Loaded) -> Result<Outcome, CliError> {
    let sec = section(&cfg.config.folner, "folner")?;
    let seq = cfg.sequence()?;
    let profile = group::folner_profile(&seq, sec.n_max)?;
    let temperedness = sec
        .temperedness
        .then(|| group::temperedness_constant(&seq, sec.n_max, sec.max_elements as u128))
        .transpose()?;
    let growth = sec.growth.then(|| group::growth_diagnostic(&seq, sec.n_max)).transpose()?;
    let mut csv = String::from("n,size,generator,numer,denom,ratio\n");
    for r in &profile {
        csv.push_str(&format!("{},{},\"{}\",{},{},{}\n", r.n, r.size, r.generator, r.numer, r.denom, r.ratio));
    }
    let mut summary = vec![format!("Følner profile for {} over n ≤ {}", seq.model(), sec.n_max)];
    if let Some(last) = profile.last() {
        summary.push(format!("  n = {}: |F_n Δ sF_n|/|F_n| = {}/{} for s = {}", last.n, last.numer, last.denom, last.generator));
    }
    if let Some(t) = &temperedness {
        summary.push(format!("  temperedness constant {:.6} (at n = {})", t.constant, t.attained_at));
    }
    Ok(Outcome {
        result: json!({ "profile": profile, "temperedness": temperedness, "growth": growth }),
        csv,
        passed: true,
        summary,
    })
}

fn nothing_computed(skipped: &[(u64, String)]) -> String {
    let (n, why) = &skipped[0];
    format!("no index computed; n = {n}: {why}")
}

fn parse_box(model: GroupModel, sides: &[i64], what: &str) -> Result<FiniteSubset, CliError> {
    if model != GroupModel::Zd(sides.len()) || sides.iter().any(|&s| s < 1) {
        return Err(CliError::Config(format!("{what} needs {} positive sides for {model}", sides.len())));
    }
    Ok(FiniteSubset::zd_box(&sides.iter().map(|&s| 0..s).collect::<Vec<_>>()))
}

pub fn tile(cfg: &Loaded, faults: TilingFaults) -> Result<Outcome, CliError> {
    let sec = section(&cfg.config.tile, "tile")?;
    let model = cfg.model()?;
    let (target, target_id) = match (&sec.target_box, &sec.target_file) {
        (Some(b), None) => (parse_box(model, b, "tile.target_box")?, format!("box{b:?}")),
        (None, Some(p)) => {
            let path = cfg.base.join(p);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            (group::parse_subset(model, &text).map_err(config_err)?, p.display().to_string())
        }
        _ => return Err(CliError::Config("set exactly one of tile.target_box and tile.target_file".into())),
    };
    let tiles = match (&sec.tile_boxes, &sec.tile_indices) {
        (Some(bs), None) => TileFamily::new(
            bs.iter()
                .map(|b| parse_box(model, b, "tile.tile_boxes"))
                .collect::<Result<Vec<_>, _>>()?,
        )
        .map_err(config_err)?,
        (None, Some(ix)) => TileFamily::from_sequence(&cfg.sequence()?, ix)?,
        _ => return Err(CliError::Config("set exactly one of tile.tile_boxes and tile.tile_indices".into())),
    };
    let parameters = sec
        .parameters
        .then(|| tiling::select_tile_parameters(sec.epsilon))
        .transpose()
        .map_err(config_err)?
        .map(|p| json!({ "k": p.k, "delta": p.delta.to_string(), "delta_f64": p.delta_f64() }));
    let t = tiling::quasi_tile_with_faults(&target, &tiles, sec.epsilon, faults)?;
    let cores = match &sec.core_window {
        None => None,
        Some(w) => {
            let f = FiniteSubset::new(
                model,
                w.iter().map(|s| model.parse_element(s)).collect::<Result<Vec<_>, _>>().map_err(config_err)?,
            )
            .map_err(config_err)?;
            Some(tiling::extract_cores(&t, &f, sec.gamma, sec.core_m, sec.core_l)?)
        }
    };
    let mut passed = t.report.valid();
    if let Some(c) = &cores {
        passed &= c.translated_disjoint && c.thickened_disjoint;
    }
    let mut csv = String::from("tile,size,centers\n");
    for (i, shape) in t.tiles.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", i, shape.len(), t.centers[i].len()));
    }
    let summary = vec![format!(
        "quasi-tiling of {} cells: coverage {:.6}, certificate {}",
        target.len(),
        t.report.coverage,
        if t.report.valid() { "valid" } else { "INVALID" }
    )];
    Ok(Outcome {
        result: json!({
            "parameters": parameters,
            "record": t.record(&target_id),
            "report": t.report,
            "warnings": t.warnings,
            "cores": cores,
        }),
        csv,
        passed,
        summary,
    })
}

pub fn entropy(cfg: &Loaded) -> Result<Outcome, CliError> {
    let sec = section(&cfg.config.entropy, "entropy")?;
    if sec.n_min < 1 || sec.n_min > sec.n_max {
        return Err(CliError::Config("entropy needs 1 ≤ n_min ≤ n_max".into()));
    }
    let seq = cfg.sequence()?;
    let ns: Vec<u64> = (sec.n_min..=sec.n_max).collect();
    let (curves, result): (Vec<EntropyCurve>, Value) = match sec.kind {
        EntropyKind::Katok => {
            let (eps, delta) = sec
                .epsilon
                .zip(sec.delta)
                .ok_or_else(|| CliError::Config("katok needs entropy.epsilon and entropy.delta".into()))?;
            let mu = MeasureModel::Bernoulli(cfg.measure()?);
            let c = entropy::katok_entropy_curve(&mu, &seq, eps, delta, &ns)?;
            let v = json!({ "kind": "katok", "epsilon": eps, "delta": delta, "curve": c });
            (vec![c], v)
        }
        EntropyKind::Topological => {
            let sys = match sec.system.unwrap_or(SystemKind::Full) {
                SystemKind::Full => ShiftSystem::full(seq.model(), cfg.measure()?.alphabet())?,
                SystemKind::GoldenMean => ShiftSystem::golden_mean(),
            };
            let c = entropy::topological_entropy_curve(&sys, &seq, &ns)?;
            let v = json!({ "kind": "topological", "curve": c });
            (vec![c], v)
        }
        EntropyKind::Smb => {
            let seed = cfg.seed(true, "sampled SMB traces")?.expect("checked");
            let mu = MeasureModel::Bernoulli(cfg.measure()?);
            let window = seq.set(sec.n_max)?;
            let curves = (0..sec.samples)
                .map(|j| {
                    let x = shift::sample_pattern_stream(&mu, &window, seed, j)?;
                    entropy::smb_trace(&mu, &x, &seq, &ns)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let lasts: Vec<f64> = curves.iter().filter_map(|c| c.tail.as_ref().map(|t| t.last)).collect();
            let mean = (!lasts.is_empty()).then(|| lasts.iter().sum::<f64>() / lasts.len() as f64);
            let v = json!({ "kind": "smb", "seed": seed, "samples": sec.samples, "mean_last": mean, "curves": curves });
            (curves, v)
        }
    };
    if let Some(c) = curves.iter().find(|c| c.points.is_empty() && !c.skipped.is_empty()) {
        return Err(CliError::Budget(nothing_computed(&c.skipped)));
    }
    let mut csv = String::from("sample,n,size,value\n");
    for (j, c) in curves.iter().enumerate() {
        for p in &c.points {
            csv.push_str(&format!("{},{},{},{}\n", j, p.n, p.size, p.value));
        }
    }
    let summary = curves
        .first()
        .and_then(|c| c.tail.as_ref())
        .map(|t| vec![format!("tail window from n = {}: min {:.6}, max {:.6}, last {:.6}", t.from_n, t.min, t.max, t.last)])
        .unwrap_or_default();
    Ok(Outcome {
        result,
        csv,
        passed: true,
        summary,
    })
}

pub fn ldp(cfg: &Loaded) -> Result<Outcome, CliError> {
    let sec = section(&cfg.config.ldp, "ldp")?;
    if sec.n_min < 1 || sec.n_min > sec.n_max {
        return Err(CliError::Config("ldp needs 1 ≤ n_min ≤ n_max".into()));
    }
    let seed = cfg.seed(sec.samples > 0, "ldp runs with samples > 0")?;
    let mu = cfg.measure()?;
    let phi = cfg.phi(mu.alphabet())?;
    let psi = cfg.psi(&mu)?;
    let ns: Vec<u64> = (sec.n_min..=sec.n_max).collect();
    let r = ldp::rate_report(&mu, &phi, &psi, sec.c, &cfg.sequence()?, &ns, sec.samples, seed)?;
    if r.rows.is_empty() {
        return Err(CliError::Budget(nothing_computed(&r.skipped)));
    }
    let summary = vec![
        format!("bounds at c = {}: thm1 {:.6}, thm2 {:.6}, thm3 {:.6}", r.c, r.thm1_lower, r.thm2_upper, r.thm3_lower),
        format!("relative-entropy reference {:.6}", -r.kl_reference),
    ];
    Ok(Outcome {
        csv: r.to_csv(),
        result: json!({ "reference": -r.kl_reference, "report": r }),
        passed: true,
        summary,
    })
}

pub fn thm3demo(cfg: &Loaded) -> Result<Outcome, CliError> {
    let sec = section(&cfg.config.thm3, "thm3")?;
    let seed = cfg.seed(true, "the construction demo")?.expect("checked");
    let mu = cfg.measure()?;
    let members = sec
        .family
        .iter()
        .map(|p| Bernoulli::new(p.clone()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(config_err)?;
    let weights = sec
        .weights
        .clone()
        .unwrap_or_else(|| vec![1.0 / members.len().max(1) as f64; members.len()]);
    let family = ProductMeasureFamily::new(members, weights).map_err(config_err)?;
    let seq = cfg.sequence()?;
    let model = seq.model();
    let mut run = Thm3Config::new(mu.clone(), family, sec.c, seq, sec.n, seed).map_err(config_err)?;
    run.phi = cfg.phi(mu.alphabet())?;
    run.psi = cfg.psi(&mu)?;
    if let Some(e) = sec.epsilon {
        run.epsilon = e;
    }
    if let Some(g) = sec.gamma {
        run.gamma = g;
    }
    if let Some(p) = sec.max_points {
        run.max_points = p;
    }
    if let Some(d) = sec.max_draws {
        run.max_draws = d;
    }
    if let Some(s) = sec.tile_side {
        let GroupModel::Zd(d) = model else {
            return Err(CliError::Config("thm3.tile_side needs a zd model".into()));
        };
        run.tiles = Some(TileFamily::new(vec![parse_box(model, &vec![s; d], "thm3.tile_side")?]).map_err(config_err)?);
    }
    let r = ldp::thm3_construction_demo(&run)?;
    let passed = r.all_in_v && r.cylinders_disjoint && r.tail_bound_consistent != Some(false);
    let mut csv = String::from("point,symbols\n");
    for (i, p) in r.points.iter().enumerate() {
        csv.push_str(&format!("{i},{p}\n"));
    }
    let summary = vec![format!(
        "{} verified points from {} draws (ln Q = {:.4}, displayed bound {:.4})",
        r.q_real, r.draws, r.ln_q_real, r.displayed_bound_ln
    )];
    Ok(Outcome {
        result: to_value(&r),
        csv,
        passed,
        summary,
    })
}

pub fn verify(level: Level, faults: Faults) -> Outcome {
    let s = verify::verify_suite(level, faults);
    let mut csv = String::from("family,passed,checks,failed\n");
    for f in &s.families {
        csv.push_str(&format!("{},{},{},{}\n", f.name, f.passed, f.checks, f.failed));
    }
    Outcome {
        result: to_value(&s),
        csv,
        passed: s.passed,
        summary: s.lines(),
    }
}
