use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use currdyn_core::currents::{
    attracting_simplex, repelling_simplex, FrequencyVectorJson, Simplex, SimplexLabel, SimplexOptions,
};
use currdyn_core::dynamics::{
    atoroidal_scan, check_inverse_pair, escalate_exponents, flare_check, goodness_dichotomy, independence_check,
    orbit_reports, sample_circuits, AtoroidalVerdict, Dichotomy, Direction, Dynamics, DynamicsOptions, Escalation,
    FlareCertificate, FlarePair, IndependenceReport, OrbitOptions, OrbitReport,
};
use currdyn_core::free_group::{CyclicWord, Letter};
use currdyn_core::marked_graph::{
    bcc_constant, check_rtt, gates, invariant_filtration, nielsen_search, GraphMap, StratumKind,
};
use currdyn_core::splitting::{expansion_power, InventoryOptions, UnitInventory};
use currdyn_core::text::{parse_map, MapFile};
use currdyn_core::Error;

use crate::report::{read_input, InputFile, Report, Sink, Verdict};
use crate::ExperimentConfig;

const BCC_RADIUS_CAP: usize = 16;
const POWER_CAP: usize = 64;
const DICHOTOMY_STEPS: usize = 4;
const TAIL_WINDOW: usize = 5;

fn load(path: &Path) -> Result<(MapFile, InputFile)> {
    let (text, input) = read_input(path)?;
    let file = parse_map(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok((file, input))
}

fn with_inverse(file: MapFile, path: &Path) -> Result<(GraphMap, GraphMap)> {
    match file.inverse {
        Some(inv) => Ok((file.map, inv)),
        None => bail!("{} has no `inverse:` block, which this command needs", path.display()),
    }
}

#[allow(clippy::too_many_arguments)]
fn emit<R: Serialize>(
    sink: &Sink,
    command: &'static str,
    inputs: &[InputFile],
    cfg: &ExperimentConfig,
    power: Option<usize>,
    complete: bool,
    verdict: Verdict,
    result: R,
) -> Result<Verdict> {
    let report = Report {
        tool: "currdyn",
        version: env!("CARGO_PKG_VERSION"),
        command,
        inputs,
        config: cfg,
        power,
        complete,
        verdict,
        result,
    };
    sink.json(command, &report)?;
    Ok(verdict)
}

fn dynamics(f: &GraphMap, fi: &GraphMap, cfg: &ExperimentConfig) -> Result<Dynamics> {
    let opts = DynamicsOptions {
        order: cfg.order,
        depth: cfg.depth,
        budget: cfg.budget,
        auto_power: true,
        simplex: SimplexOptions::default(),
    };
    Ok(Dynamics::new(f, fi, opts)?)
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Serialize)]
struct EdgeJson {
    name: String,
    from: String,
    to: String,
    image: String,
}

#[derive(Serialize)]
struct StratumJson {
    kind: StratumKind,
    edges: Vec<String>,
    /// PF eigenvalue, EG strata only.
    eigenvalue: Option<f64>,
}

#[derive(Serialize)]
struct AnalyzeResult {
    rank: usize,
    vertices: Vec<String>,
    edges: Vec<EdgeJson>,
    strata: Vec<StratumJson>,
    bcc: usize,
    z: usize,
    c_constant: usize,
    units: usize,
    inventory_complete: bool,
    gates: Vec<Vec<String>>,
    illegal_turns: Vec<[String; 2]>,
    nielsen_paths: Vec<String>,
    closed_nielsen_paths: Vec<String>,
    nielsen_capped: bool,
    rtt_clean: bool,
    expansion_power: Option<usize>,
    inverse_supplied: bool,
}

pub fn analyze(path: &Path, cfg: &ExperimentConfig, sink: &Sink) -> Result<Verdict> {
    let (file, input) = load(path)?;
    let f = &file.map;
    if let Some(fi) = &file.inverse {
        check_inverse_pair(f, fi, 16, cfg.seed)?;
    }
    let g = f.graph();
    let filt = invariant_filtration(f)?;
    let ls = gates(f);
    let inv_opts = InventoryOptions {
        nielsen_max_len: cfg.nielsen_len,
        ..InventoryOptions::default()
    };
    let units = UnitInventory::build(f, &filt, &inv_opts);
    let bcc = bcc_constant(f, BCC_RADIUS_CAP)?;
    let nielsen = nielsen_search(f, cfg.nielsen_len);
    let vname = |v: usize| g.vertex_names()[v].clone();
    let result = AnalyzeResult {
        rank: g.rank(),
        vertices: g.vertex_names().to_vec(),
        edges: (0..g.edge_count())
            .map(|i| {
                let e = Letter::positive(i);
                EdgeJson {
                    name: g.edge_name(i).to_string(),
                    from: vname(g.origin(e)),
                    to: vname(g.terminus(e)),
                    image: g.format_path(&f.image(e)),
                }
            })
            .collect(),
        strata: filt
            .strata
            .iter()
            .map(|s| StratumJson {
                kind: s.kind,
                edges: s.edges.iter().map(|&i| g.edge_name(i).to_string()).collect(),
                eigenvalue: (s.kind == StratumKind::Eg).then_some(s.pf_eigenvalue),
            })
            .collect(),
        bcc,
        z: units.z(),
        c_constant: bcc.max(2 * units.z() + 1),
        units: units.len(),
        inventory_complete: units.is_complete(),
        gates: ls
            .gates
            .iter()
            .map(|gate| gate.iter().map(|&d| g.letter_name(d)).collect())
            .collect(),
        illegal_turns: ls
            .illegal_turns
            .iter()
            .map(|&(a, b)| [g.letter_name(a), g.letter_name(b)])
            .collect(),
        nielsen_paths: nielsen.indivisible().iter().map(|p| g.format_path(p)).collect(),
        closed_nielsen_paths: nielsen.closed(g).iter().map(|p| g.format_path(p)).collect(),
        nielsen_capped: nielsen.capped(),
        rtt_clean: check_rtt(f, &filt, &ls, 3).is_clean(),
        expansion_power: expansion_power(f, &filt, &units, POWER_CAP).ok(),
        inverse_supplied: file.inverse.is_some(),
    };
    let complete = result.inventory_complete && !result.nielsen_capped;
    emit(
        sink,
        "analyze",
        &[input],
        cfg,
        Some(1),
        complete,
        Verdict::Holds,
        result,
    )
}

// ---------------------------------------------------------------------------
// simplex

#[derive(Serialize)]
struct SimplexJson {
    label: SimplexLabel,
    order: usize,
    approximate: bool,
    points: Vec<FrequencyVectorJson>,
}

impl SimplexJson {
    fn new(s: &Simplex, f: &GraphMap) -> Self {
        SimplexJson {
            label: s.label,
            order: s.order,
            approximate: s.approximate,
            points: s.points.iter().map(|p| p.to_json(f.graph())).collect(),
        }
    }
}

#[derive(Serialize)]
struct SimplexResult {
    attracting: SimplexJson,
    repelling: Option<SimplexJson>,
    warnings: Vec<String>,
}

pub fn simplex(path: &Path, cfg: &ExperimentConfig, sink: &Sink) -> Result<Verdict> {
    let (file, input) = load(path)?;
    let plus = attracting_simplex(&file.map, cfg.order)?;
    let mut warnings = Vec::new();
    let minus = match &file.inverse {
        Some(fi) => {
            check_inverse_pair(&file.map, fi, 16, cfg.seed)?;
            Some(repelling_simplex(fi, cfg.order)?)
        }
        None => {
            let w = "no inverse block: only the attracting simplex is reported".to_string();
            eprintln!("warning: {w}");
            warnings.push(w);
            None
        }
    };
    let complete = !plus.approximate && minus.as_ref().is_none_or(|s| !s.approximate);
    let result = SimplexResult {
        attracting: SimplexJson::new(&plus, &file.map),
        repelling: minus
            .as_ref()
            .zip(file.inverse.as_ref())
            .map(|(s, fi)| SimplexJson::new(s, fi)),
        warnings,
    };
    emit(
        sink,
        "simplex",
        &[input],
        cfg,
        Some(1),
        complete,
        Verdict::Holds,
        result,
    )
}

// ---------------------------------------------------------------------------
// orbit and ns

const STEP_COLUMNS: [&str; 9] = [
    "sample",
    "word",
    "n",
    "forward_length",
    "forward_distance",
    "forward_goodness",
    "backward_length",
    "backward_distance",
    "backward_goodness",
];

#[derive(Serialize)]
struct StepRow<'a> {
    sample: usize,
    word: &'a str,
    n: usize,
    forward_length: Option<usize>,
    forward_distance: Option<f64>,
    forward_goodness: Option<f64>,
    backward_length: Option<usize>,
    backward_distance: Option<f64>,
    backward_goodness: Option<f64>,
}

fn step_rows(reports: &[OrbitReport]) -> Vec<StepRow<'_>> {
    reports
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            r.steps.iter().map(move |s| StepRow {
                sample: i,
                word: &r.word,
                n: s.n,
                forward_length: s.forward_length,
                forward_distance: s.forward_distance,
                forward_goodness: s.forward_goodness,
                backward_length: s.backward_length,
                backward_distance: s.backward_distance,
                backward_goodness: s.backward_goodness,
            })
        })
        .collect()
}

fn run_orbits(ctx: &Dynamics, words: &[CyclicWord], opts: &OrbitOptions) -> Result<Vec<OrbitReport>> {
    Ok(orbit_reports(ctx, words, opts).into_iter().collect::<Result<_, _>>()?)
}

fn inventories_complete(ctx: &Dynamics) -> bool {
    [&ctx.forward, &ctx.backward]
        .iter()
        .all(|s| s.units.is_complete() && !s.simplex.approximate)
}

#[derive(Serialize)]
struct OrbitResult {
    converged: usize,
    capped: usize,
    orbits: Vec<OrbitReport>,
}

pub fn orbit(path: &Path, goodness: bool, cfg: &ExperimentConfig, sink: &Sink) -> Result<Verdict> {
    let (file, input) = load(path)?;
    let (f, fi) = with_inverse(file, path)?;
    let ctx = dynamics(&f, &fi, cfg)?;
    let words = sample_circuits(ctx.graph(), cfg.samples, cfg.sample_len, cfg.seed);
    let opts = OrbitOptions {
        n_max: cfg.n_max,
        epsilon: cfg.epsilon,
        goodness,
        stop_at_hit: false,
    };
    let orbits = run_orbits(&ctx, &words, &opts)?;
    sink.csv("orbit", &STEP_COLUMNS, &step_rows(&orbits))?;
    let converged = orbits.iter().filter(|r| r.converged()).count();
    let capped = orbits.iter().filter(|r| r.capped).count();
    let verdict = if converged == orbits.len() {
        Verdict::Holds
    } else {
        Verdict::Undecided
    };
    let complete = inventories_complete(&ctx) && capped == 0;
    let result = OrbitResult {
        converged,
        capped,
        orbits,
    };
    emit(sink, "orbit", &[input], cfg, Some(ctx.power), complete, verdict, result)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum NsStatus {
    Converged,
    NotMonotone,
    NotConverged,
    Capped,
}

#[derive(Serialize)]
struct NsWord {
    word: String,
    status: NsStatus,
    achieved: Option<(Direction, usize)>,
    tail: Vec<f64>,
    /// `None` when the iterates outgrew the budget.
    dichotomy: Option<Dichotomy>,
}

#[derive(Serialize)]
struct NsResult {
    scan: AtoroidalVerdict,
    scan_witness: Option<String>,
    forward_simplex_points: usize,
    backward_simplex_points: usize,
    words: Vec<NsWord>,
}

pub fn ns(path: &Path, cfg: &ExperimentConfig, sink: &Sink) -> Result<Verdict> {
    let (file, input) = load(path)?;
    let (f, fi) = with_inverse(file, path)?;
    let scan = atoroidal_scan(&f, cfg.scan_len, cfg.max_pow);
    if let AtoroidalVerdict::NonAtoroidal { witness, .. } = &scan {
        let result = NsResult {
            scan_witness: Some(f.graph().format_path(witness)),
            scan,
            forward_simplex_points: 0,
            backward_simplex_points: 0,
            words: Vec::new(),
        };
        return emit(sink, "ns", &[input], cfg, Some(1), true, Verdict::Fails, result);
    }
    let ctx = dynamics(&f, &fi, cfg)?;
    let words = sample_circuits(ctx.graph(), cfg.samples, cfg.sample_len, cfg.seed);
    let opts = OrbitOptions {
        n_max: cfg.n_max,
        epsilon: cfg.epsilon,
        goodness: false,
        stop_at_hit: true,
    };
    let orbits = run_orbits(&ctx, &words, &opts)?;
    sink.csv("ns", &STEP_COLUMNS, &step_rows(&orbits))?;
    let mut rows = Vec::with_capacity(words.len());
    for (w, r) in words.iter().zip(&orbits) {
        let achieved = r.achieved();
        let status = match achieved {
            Some(_) if r.tail_monotone(TAIL_WINDOW) => NsStatus::Converged,
            Some(_) => NsStatus::NotMonotone,
            None if r.capped => NsStatus::Capped,
            None => NsStatus::NotConverged,
        };
        let dichotomy = match goodness_dichotomy(&ctx, w, cfg.delta, DICHOTOMY_STEPS) {
            Ok(d) => Some(d),
            Err(Error::LengthCap(_)) => None,
            Err(e) => return Err(e.into()),
        };
        rows.push(NsWord {
            word: r.word.clone(),
            status,
            achieved,
            tail: r.tail(TAIL_WINDOW),
            dichotomy,
        });
    }
    let verdict = if rows.iter().any(|w| w.status == NsStatus::NotMonotone) {
        Verdict::Fails
    } else if rows.iter().all(|w| w.status == NsStatus::Converged) {
        Verdict::Holds
    } else {
        Verdict::Undecided
    };
    let result = NsResult {
        scan,
        scan_witness: None,
        forward_simplex_points: ctx.forward.simplex.points.len(),
        backward_simplex_points: ctx.backward.simplex.points.len(),
        words: rows,
    };
    let complete = inventories_complete(&ctx);
    emit(sink, "ns", &[input], cfg, Some(ctx.power), complete, verdict, result)
}

// ---------------------------------------------------------------------------
// flare

#[derive(Serialize)]
struct FlareResult {
    independence: IndependenceReport,
    escalation: Escalation,
    /// First sample pulled back by `f⁻ᵏ` and by `h⁻ᵏ`, checked at the found
    /// exponents.
    pull_back: Option<usize>,
    stress: Option<FlareCertificate>,
    witness: Option<String>,
}

/// `[g^k(c)]`, or `None` once it outgrows the budget.
fn iterate(g: &GraphMap, c: &CyclicWord, k: usize, budget: usize) -> Result<Option<CyclicWord>> {
    let mut cur = c.clone();
    for _ in 0..k {
        cur = g.map_circuit(&cur)?;
        if cur.len() > budget {
            return Ok(None);
        }
    }
    Ok(Some(cur))
}

fn first_failure(c: &FlareCertificate) -> Option<String> {
    c.witness.map(|i| c.samples[i].word.clone())
}

pub fn flare(first: &Path, second: &Path, cfg: &ExperimentConfig, sink: &Sink) -> Result<Verdict> {
    let (a, ia) = load(first)?;
    let (b, ib) = load(second)?;
    let (f, fi) = with_inverse(a, first)?;
    let (h, hi) = with_inverse(b, second)?;
    if f.graph() != h.graph() {
        bail!(
            "{} and {} are not maps of the same graph",
            first.display(),
            second.display()
        );
    }
    check_inverse_pair(&f, &fi, 16, cfg.seed)?;
    check_inverse_pair(&h, &hi, 16, cfg.seed)?;
    let simplices = [
        attracting_simplex(&f, cfg.order)?,
        repelling_simplex(&fi, cfg.order)?,
        attracting_simplex(&h, cfg.order)?,
        repelling_simplex(&hi, cfg.order)?,
    ];
    let independence = independence_check(
        (&simplices[0], &simplices[1]),
        (&simplices[2], &simplices[3]),
        cfg.tolerance,
    )?;
    let samples = sample_circuits(f.graph(), cfg.samples, cfg.sample_len, cfg.seed);
    let pair = FlarePair {
        f: &f,
        f_inv: &fi,
        h: &h,
        h_inv: &hi,
    };
    let escalation = escalate_exponents(pair, &samples, cfg.growth, cfg.exponent_cap, cfg.budget)?;
    let (mut verdict, mut witness, mut pull_back, mut stress) = (Verdict::Holds, None, None, None);
    match &escalation {
        Escalation::Found(cert) => {
            let k = 2 * cert.n.max(cert.m) + 2;
            pull_back = Some(k);
            let pulled = [
                iterate(&fi, &samples[0], k, cfg.budget)?,
                iterate(&hi, &samples[0], k, cfg.budget)?,
            ];
            match pulled {
                [Some(x), Some(y)] => match flare_check(pair, cert.n, cert.m, &[x, y], cfg.growth, cfg.budget) {
                    Ok(c) => {
                        if !c.verdict {
                            verdict = Verdict::Fails;
                            witness = first_failure(&c);
                        }
                        stress = Some(c);
                    }
                    Err(Error::LengthCap(_)) => verdict = Verdict::Undecided,
                    Err(e) => return Err(e.into()),
                },
                _ => verdict = Verdict::Undecided,
            }
        }
        Escalation::Failure { certificate, .. } => match certificate {
            Some(c) => {
                verdict = Verdict::Fails;
                witness = first_failure(c);
            }
            None => verdict = Verdict::Undecided,
        },
    }
    if !independence.independent {
        verdict = Verdict::Fails;
    }
    let complete = simplices.iter().all(|s| !s.approximate);
    let result = FlareResult {
        independence,
        escalation,
        pull_back,
        stress,
        witness,
    };
    emit(sink, "flare", &[ia, ib], cfg, Some(1), complete, verdict, result)
}

// ---------------------------------------------------------------------------
// scan

#[derive(Serialize)]
struct ScanResult {
    scan: AtoroidalVerdict,
    witness: Option<String>,
}

pub fn scan(path: &Path, cfg: &ExperimentConfig, sink: &Sink) -> Result<Verdict> {
    let (file, input) = load(path)?;
    let f = &file.map;
    let scan = atoroidal_scan(f, cfg.scan_len, cfg.max_pow);
    let (verdict, witness) = match &scan {
        AtoroidalVerdict::NonAtoroidal { witness, .. } => (Verdict::Fails, Some(f.graph().format_path(witness))),
        AtoroidalVerdict::NoneFoundUpTo { .. } => (Verdict::Holds, None),
    };
    emit(
        sink,
        "scan",
        &[input],
        cfg,
        Some(1),
        true,
        verdict,
        ScanResult { scan, witness },
    )
}
