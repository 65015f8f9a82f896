use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use netfe::estimator::{fit_alternative_normalization, fit_two_way, EtaRoute, Estimator, Normalization, RankReport};
use netfe::inference::{
    connectivity_report, diagnostics, sigma2_hat, standard_errors, ConnectivityReport, Diagnostics, Network, SeMode,
};
use netfe::io::{self as nio, FitRow, TwoWayFitRow};
use netfe::simulation::{DGPConfig, Simulation, SimulationSummary, RNG_NAME};
use netfe::spectral::{cheeger_exact, cheeger_interval, diag_sdag, DiagMode, CHEEGER_MAX_N};
use netfe::{connected_components, largest_component, Graph, NetError, Result};
use serde::Serialize;
use serde_json::json;

use crate::manifest::{envelope, InputFile, RunManifest};
use crate::table::{decile_table, key_values, num};
use crate::{DiagArgs, FitArgs, NormArg, ProjectArgs, RouteArg, SeArg, SimulateArgs};

#[derive(Clone, Debug, Serialize)]
pub struct Reduction {
    pub input_n: usize,
    pub input_m: usize,
    pub dropped_vertices: usize,
    pub dropped_edges: usize,
}

/// Largest component (default) or a hard connectivity check with `no_reduce`.
/// Also returns the kept edge indices.
fn reduce(g: Graph, no_reduce: bool) -> Result<(Graph, Vec<usize>, Reduction)> {
    let (n, m) = (g.n(), g.m());
    if no_reduce {
        g.require_connected()?;
        let keep = (0..m).collect();
        return Ok((g, keep, Reduction { input_n: n, input_m: m, dropped_vertices: 0, dropped_edges: 0 }));
    }
    let sub = largest_component(&g);
    let r = Reduction {
        input_n: n,
        input_m: m,
        dropped_vertices: n - sub.graph.n(),
        dropped_edges: m - sub.graph.m(),
    };
    if r.dropped_vertices > 0 {
        log::warn!(
            "kept the largest connected component: dropped {} of {} vertices and {} of {} edges",
            r.dropped_vertices,
            n,
            r.dropped_edges,
            m
        );
    }
    Ok((sub.graph, sub.edge_map, r))
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    match path {
        Some(p) => nio::write_json(value, nio::create(p)?),
        None => nio::write_json(value, io::stdout().lock()),
    }
}

fn with_output<F>(path: Option<&Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        Some(p) => {
            let mut w = nio::create(p)?;
            f(&mut w)?;
            w.flush()?;
        }
        None => f(&mut io::stdout().lock())?,
    }
    Ok(())
}

#[derive(Serialize)]
struct CheegerReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<f64>,
    implied_interval: (f64, f64),
}

#[derive(Serialize)]
struct StochasticSdag {
    probes: usize,
    seed: u64,
    values: Vec<f64>,
    se: Vec<f64>,
}

#[derive(Serialize)]
struct DiagReport {
    reduction: Reduction,
    connectivity: ConnectivityReport,
    diagnostics: Diagnostics,
    cheeger: CheegerReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    stochastic_sdag: Option<StochasticSdag>,
}

pub fn diag(a: &DiagArgs) -> Result<()> {
    let started = Instant::now();
    if !(a.sigma2 > 0.0) {
        return Err(NetError::InvalidParameter("--sigma2 must be positive".into()));
    }
    let g = nio::read_edges(nio::open(&a.edges)?)?;
    let (g, _, reduction) = reduce(g, a.no_reduce)?;
    let net = Network::new(&g)?;
    let connectivity = connectivity_report(&net, None, a.sigma2)?;
    let diag = diagnostics(&net, a.sigma2, None)?;
    let cheeger = CheegerReport {
        exact: if g.n() <= CHEEGER_MAX_N { Some(cheeger_exact(&g)?) } else { None },
        implied_interval: cheeger_interval(net.lambda2),
    };
    let stochastic_sdag = match a.probes {
        Some(k) => {
            let est = diag_sdag(&g, DiagMode::Stochastic { k_probes: k, seed: a.seed })?;
            Some(StochasticSdag {
                probes: k,
                seed: a.seed,
                values: est.values.iter().copied().collect(),
                se: est.se.map(|s| s.iter().copied().collect()).unwrap_or_default(),
            })
        }
        None => None,
    };

    let options = json!({
        "no_reduce": a.no_reduce,
        "sigma2": a.sigma2,
        "probes": a.probes,
        "seed": a.seed,
    });
    let mut manifest = RunManifest::new("diag", vec![InputFile::of(&a.edges)?], &options.to_string());
    manifest.n = g.n();
    manifest.m = g.m();
    if a.probes.is_some() {
        manifest.seed = Some(a.seed);
        manifest.rng = Some("ChaCha8 (stream k: probe k)".into());
    }

    let gl = &connectivity.global;
    let mut head = vec![
        ("n", gl.n.to_string()),
        ("m", gl.m.to_string()),
        ("lambda2", num(gl.lambda2)),
        ("lambda_max", num(gl.lambda_max)),
        ("h", num(gl.h)),
        ("H", num(gl.big_h)),
        ("1/h", num(gl.inv_h)),
        ("tr(L*)/(n-1)", num(gl.trace_lstar_over_nm1)),
        ("tr(M L* M)/(n-1)", num(gl.trace_centered_lstar_over_nm1)),
    ];
    if let Some(c) = cheeger.exact {
        head.push(("cheeger", num(c)));
    }
    let (lo, hi) = cheeger.implied_interval;
    head.push(("cheeger range", format!("[{}, {}]", num(lo), num(hi))));
    if reduction.dropped_vertices > 0 {
        head.push((
            "dropped",
            format!("{} vertices, {} edges", reduction.dropped_vertices, reduction.dropped_edges),
        ));
    }
    let dc = &connectivity.deciles;
    let rows = [
        ("d", &dc["d"]),
        ("h_i", &dc["h_i"]),
        ("H_i", &dc["H_i"]),
        ("h_i2", &dc["h_i2"]),
        ("Sdag_ii", &dc["Sdag_ii"]),
        ("ci_exact", &diag.ci_width_exact_deciles),
        ("ci_first", &diag.ci_width_first_order_deciles),
    ];
    let text = format!("{}\n{}", key_values(&head), decile_table(&rows));
    print!("{text}");

    if let Some(p) = &a.csv {
        nio::write_records(&connectivity.vertices, nio::create(p)?)?;
    }
    let report = DiagReport {
        reduction,
        connectivity,
        diagnostics: diag,
        cheeger,
        stochastic_sdag,
    };
    if let Some(p) = &a.json {
        write_json(Some(p), &envelope(&manifest, &report, started)?)?;
    }
    Ok(())
}

fn normalization(n: NormArg) -> Normalization {
    match n {
        NormArg::D => Normalization::DWeighted,
        NormArg::Mean => Normalization::MeanZero,
    }
}

fn se_mode(s: SeArg) -> SeMode {
    match s {
        SeArg::Plugin => SeMode::Plugin,
        SeArg::PluginUnscaled => SeMode::PluginUnscaled,
        SeArg::Homosked => SeMode::Homoskedastic,
    }
}

#[derive(Serialize)]
struct FitReport {
    model: &'static str,
    normalization: Normalization,
    se: SeMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    route: Option<EtaRoute>,
    covariates: Vec<String>,
    beta: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma2_hat: Option<f64>,
    rank: RankReport,
    dropped_rows: usize,
    n: usize,
    m: usize,
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let started = Instant::now();
    let options = json!({
        "two_way": a.two_way,
        "outcome": a.outcome,
        "normalization": format!("{:?}", a.normalization),
        "se": format!("{:?}", a.se),
        "route": format!("{:?}", a.route),
        "no_reduce": a.no_reduce,
    });
    let mut manifest = RunManifest::new("fit", vec![InputFile::of(&a.data)?], &options.to_string());
    let norm = normalization(a.normalization);
    let mode = se_mode(a.se);

    let report = if a.two_way {
        let bd = nio::read_matched(nio::open(&a.data)?)?;
        let (bd, dropped) = if a.no_reduce { (bd, 0) } else { bd.restrict_to_largest_component()? };
        if dropped > 0 {
            log::warn!("kept the largest connected component: dropped {dropped} of {} rows", dropped + bd.m());
        }
        let route = match a.route {
            RouteArg::Joint => EtaRoute::Joint,
            RouteArg::Profiled => EtaRoute::Profiled,
            RouteArg::Weightedfd => EtaRoute::WeightedFd,
        };
        let tw = fit_two_way(&bd, route, norm)?;
        let se = standard_errors(&tw.estimator, &tw.fit, mode)?;
        let mut rows: Vec<TwoWayFitRow> = (0..bd.n1)
            .map(|i| TwoWayFitRow {
                side: "mu",
                vertex_id: bd.labels1[i].clone(),
                effect: tw.mu[i],
                se: se.se[i],
            })
            .collect();
        rows.extend((0..bd.n2).map(|j| TwoWayFitRow {
            side: "eta",
            vertex_id: bd.labels2[j].clone(),
            effect: tw.eta[j],
            se: se.se[bd.n1 + j],
        }));
        with_output(a.out.as_deref(), |w| nio::write_two_way_fits(&rows, w))?;
        manifest.n = bd.n1 + bd.n2;
        manifest.m = bd.m();
        FitReport {
            model: "two-way",
            normalization: norm,
            se: mode,
            route: Some(route),
            covariates: (1..=bd.p()).map(|k| format!("x{k}")).collect(),
            beta: tw.fit.beta.iter().copied().collect(),
            sigma2_hat: sigma2_hat(&tw.fit).ok(),
            rank: tw.fit.rank_report.clone(),
            dropped_rows: dropped,
            n: bd.n1 + bd.n2,
            m: bd.m(),
        }
    } else {
        let t = nio::read_edge_table(nio::open(&a.data)?)?;
        let (y, x, names) = t.outcome_and_covariates(&a.outcome)?;
        let (g, keep, reduction) = reduce(t.graph()?, a.no_reduce)?;
        let y = DVector::from_iterator(keep.len(), keep.iter().map(|&e| y[e]));
        let x = DMatrix::from_fn(keep.len(), x.ncols(), |r, c| x[(keep[r], c)]);
        // rows are modelled in file orientation: y = α_first − α_second + …
        let gm = g.matrices().reoriented(g.swapped());
        let est = Estimator::from_matrices(gm, &x)?;
        let mut fit = est.fit(&y)?;
        if norm == Normalization::MeanZero {
            fit = fit_alternative_normalization(&fit);
        }
        let se = standard_errors(&est, &fit, mode)?;
        let rows: Vec<FitRow> = (0..g.n())
            .map(|i| FitRow {
                vertex_id: g.label(i).to_string(),
                alpha: fit.alpha[i],
                se: se.se[i],
            })
            .collect();
        with_output(a.out.as_deref(), |w| nio::write_fits(&rows, w))?;
        manifest.n = g.n();
        manifest.m = g.m();
        FitReport {
            model: "one-way",
            normalization: norm,
            se: mode,
            route: None,
            covariates: names,
            beta: fit.beta.iter().copied().collect(),
            sigma2_hat: sigma2_hat(&fit).ok(),
            rank: fit.rank_report.clone(),
            dropped_rows: reduction.dropped_edges,
            n: g.n(),
            m: g.m(),
        }
    };
    log::info!("fitted {} effects from {} rows", report.n, report.m);
    if let Some(p) = &a.json {
        write_json(Some(p), &envelope(&manifest, &report, started)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ProjectReport {
    n1: usize,
    n2: usize,
    m: usize,
    /// Number of within-connector row pairs (rows of Q).
    m_prime: usize,
    edges: usize,
    isolated: usize,
    components: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda2: Option<f64>,
}

pub fn project(a: &ProjectArgs) -> Result<()> {
    let started = Instant::now();
    let bd = nio::read_matched_with(nio::open(&a.data)?, false)?;
    let p = bd.one_mode_projection();
    let mut deg = vec![0usize; p.n2];
    for &(j, jp, _) in &p.edges {
        deg[j] += 1;
        deg[jp] += 1;
    }
    let isolated = deg.iter().filter(|&&d| d == 0).count();
    let (components, lambda2) = if p.edges.is_empty() {
        log::warn!("projection is empty: no type-1 vertex is matched to two distinct type-2 vertices");
        (p.n2, None)
    } else {
        let g = p.graph()?;
        let c = connected_components(&g).len();
        let l2 = if c == 1 { Some(netfe::spectral::lambda2(&g, netfe::spectral::DEFAULT_TOL)?) } else { None };
        (c, l2)
    };
    if isolated > 0 && !p.edges.is_empty() {
        log::warn!("{isolated} type-2 vertices have no projected edges");
    }
    with_output(a.out.as_deref(), |w| nio::write_projection(&p, w))?;
    let report = ProjectReport {
        n1: bd.n1,
        n2: bd.n2,
        m: bd.m(),
        m_prime: p.m_prime,
        edges: p.edges.len(),
        isolated,
        components,
        lambda2,
    };
    log::info!("{} projected edges on {} vertices", report.edges, report.n2);
    if let Some(path) = &a.json {
        let mut manifest = RunManifest::new("project", vec![InputFile::of(&a.data)?], "{}");
        manifest.n = p.n2;
        manifest.m = p.edges.len();
        write_json(Some(path), &envelope(&manifest, &report, started)?)?;
    }
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let started = Instant::now();
    let text = fs::read_to_string(&a.config)?;
    let mut cfg = DGPConfig::parse(&text)?;
    if let Some(r) = a.reps {
        cfg.reps = r;
        cfg.validate()?;
    }
    let canonical = cfg.to_config_string();
    let sim = Simulation::new(cfg.clone())?;
    if let Some(dir) = &a.export_dir {
        fs::create_dir_all(dir)?;
        let g = &sim.fixture.graph;
        nio::write_edges(g, nio::create(&dir.join("edges.csv"))?)?;
        nio::write_edge_data(g, &sim.outcome(0), &sim.fixture.x, nio::create(&dir.join("data.csv"))?)?;
        fs::write(dir.join("config.cfg"), &canonical)?;
    }
    let summary: SimulationSummary = sim.run()?;
    let mut manifest = RunManifest::new("simulate", vec![InputFile::of(&a.config)?], &canonical);
    manifest.seed = Some(cfg.seed);
    manifest.rng = Some(RNG_NAME.into());
    manifest.n = summary.n;
    manifest.m = summary.m;
    if summary.exact_recovery {
        log::info!("exact recovery in every replication");
    }
    write_json(a.json.as_deref(), &envelope(&manifest, &summary, started)?)
}
