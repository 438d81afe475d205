use std::fs;
use std::path::Path;

use fdtnet::filters::{build_fdt_spec, FdtFilterSpec, PolyFilter, Response, SpectralFilter};
use fdtnet::io::{read_matrix, read_vector};
use fdtnet::mnn::{forward, MnnParams};
use fdtnet::partition::{partition_spectrum, unit_ball_volume, weyl_gap_index, weyl_law_fit};
use fdtnet::perturbation::{
    davis_kahan_check, random_symmetric_perturbation, run_davis_kahan_trials,
    run_filter_stability_trials, run_nn_stability_trials, run_weyl_trials, summarize,
    DavisKahanTrialConfig, StabilityReport, StabilityTrialConfig, WeylTrialConfig,
};
use fdtnet::spectral::{build_cycle_laplacian, build_torus_laplacian, sym_eig};
use fdtnet::wireless::{
    evaluate_perturbed, gap_table_csv, train_sweep, TrainingRun, WirelessConfig,
};
use fdtnet::{Signal, SymmetricOperator};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{csv_header, csv_row, json_report, load_config, num, Format, Sink};
use crate::{
    CliError, DkCheckArgs, EigArgs, FilterResponseArgs, NnForwardArgs, PartitionArgs,
    StabilityArgs, WeylCheckArgs, WeylLawArgs, WirelessEvalArgs, WirelessTrainArgs,
};

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_operator(path: &Path) -> Result<SymmetricOperator> {
    Ok(SymmetricOperator::new(read_matrix(path)?)?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(fdtnet::Error::from)?;
    Ok(serde_json::from_str(&text).map_err(fdtnet::Error::from)?)
}

pub fn eig(args: &EigArgs, sink: &Sink) -> Result<()> {
    let es = sym_eig(&read_operator(&args.matrix)?)?;
    let n = es.dim();
    match sink.format {
        Format::Json => {
            let vectors: Vec<Vec<f64>> = (0..n)
                .map(|i| es.eigenvector(i).iter().copied().collect())
                .collect();
            sink.write(&json_report(
                args,
                &json!({ "eigenvalues": es.eigenvalues(), "eigenvectors": vectors }),
            )?)
        }
        Format::Csv => {
            let mut out = csv_header(args)?;
            let mut head = vec!["eigenvalue".to_string()];
            head.extend((0..n).map(|j| format!("v{j}")));
            out.push_str(&csv_row(&head));
            for i in 0..n {
                let mut row = vec![num(es.eigenvalues()[i])];
                row.extend(es.eigenvector(i).iter().map(|&x| num(x)));
                out.push_str(&csv_row(&row));
            }
            sink.write(&out)
        }
    }
}

fn eigenvalues_from(eigenvalues: Option<&Path>, matrix: Option<&Path>) -> Result<Vec<f64>> {
    match (eigenvalues, matrix) {
        (Some(p), _) => Ok(read_vector(p)?),
        (None, Some(m)) => Ok(sym_eig(&read_operator(m)?)?.eigenvalues().to_vec()),
        (None, None) => Err(usage("need --eigenvalues or --matrix")),
    }
}

pub fn partition(args: &PartitionArgs, sink: &Sink) -> Result<()> {
    let vals = eigenvalues_from(args.eigenvalues.as_deref(), args.matrix.as_deref())?;
    let p = partition_spectrum(&vals, args.alpha)?;
    let clusters: Vec<Vec<usize>> = p.clusters().into_iter().map(|r| r.collect()).collect();
    match sink.format {
        Format::Json => sink.write(&json_report(
            args,
            &json!({
                "alpha": p.alpha(),
                "D": p.d_count(),
                "N": p.n_count(),
                "singletons": p.singletons(),
                "groups": p.groups().iter().map(|g| g.clone().collect::<Vec<_>>()).collect::<Vec<_>>(),
                "clusters": clusters,
            }),
        )?),
        Format::Csv => {
            let mut out = csv_header(args)?;
            out.push_str("index,eigenvalue,cluster,kind\n");
            for (c, members) in clusters.iter().enumerate() {
                let kind = if members.len() == 1 { "separated" } else { "group" };
                for &i in members {
                    out.push_str(&csv_row(&[i.to_string(), num(vals[i]), c.to_string(), kind.into()]));
                }
            }
            sink.write(&out)
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FilterDoc {
    Fdt(FdtFilterSpec),
    Response(Response),
    Poly(PolyFilter),
}

pub fn filter_response(args: &FilterResponseArgs, sink: &Sink) -> Result<()> {
    let vals = read_vector(&args.eigenvalues)?;
    let doc: FilterDoc = read_json(&args.filter)?;
    let scalar: Option<Response> = match &doc {
        FilterDoc::Fdt(_) => None,
        FilterDoc::Response(r) => Some(r.clone()),
        FilterDoc::Poly(p) => Some(Response::Polynomial {
            coeffs: PolyFilter::new(p.coeffs().to_vec())?.coeffs().to_vec(),
        }),
    };
    let fdt: Option<FdtFilterSpec> = match (&doc, args.alpha) {
        (FilterDoc::Fdt(s), _) => {
            // re-validate: derived deserialization skips the constructor
            let s = FdtFilterSpec::new(
                s.partition().clone(),
                s.singleton_responses().clone(),
                s.group_constants().to_vec(),
            )?;
            if s.partition().len() != vals.len() {
                return Err(usage("FDT spec does not cover the given eigenvalues"));
            }
            Some(s)
        }
        (_, Some(alpha)) => {
            let r = scalar
                .clone()
                .expect("non-FDT documents carry a scalar response");
            let part = partition_spectrum(&vals, alpha)?;
            Some(build_fdt_spec(|l| r.eval(l), &part, &vals)?)
        }
        _ => None,
    };
    let rows: Vec<(f64, f64)> = vals
        .iter()
        .enumerate()
        .map(|(i, &l)| match (&fdt, &scalar) {
            (Some(s), _) => (l, s.response_at(i, l)),
            (None, Some(r)) => (l, r.eval(l)),
            (None, None) => unreachable!(),
        })
        .collect();
    let grid: Vec<(f64, f64)> = match (args.grid, &scalar) {
        (Some(m), Some(r)) if m >= 2 && !vals.is_empty() => {
            let (lo, hi) = (vals[0], vals[vals.len() - 1]);
            (0..m)
                .map(|k| {
                    let l = lo + (hi - lo) * k as f64 / (m - 1) as f64;
                    (l, r.eval(l))
                })
                .collect()
        }
        (Some(_), None) => return Err(usage("--grid needs a polynomial or response filter")),
        _ => Vec::new(),
    };
    match sink.format {
        Format::Csv => {
            let mut out = csv_header(args)?;
            out.push_str("source,lambda,response\n");
            for (l, h) in &rows {
                out.push_str(&csv_row(&["eigenvalue".into(), num(*l), num(*h)]));
            }
            for (l, h) in &grid {
                out.push_str(&csv_row(&["grid".into(), num(*l), num(*h)]));
            }
            sink.write(&out)
        }
        Format::Json => sink.write(&json_report(
            args,
            &json!({ "eigenvalue_response": rows, "grid_response": grid }),
        )?),
    }
}

pub fn nn_forward(args: &NnForwardArgs, sink: &Sink) -> Result<()> {
    let params: MnnParams = read_json(&args.params)?;
    params.validate()?;
    let es = sym_eig(&read_operator(&args.matrix)?)?;
    let x = read_matrix(&args.signal)?;
    let x = if x.nrows() == 1 && es.dim() > 1 {
        x.transpose()
    } else {
        x
    };
    let input: Vec<Signal> = x.column_iter().map(|c| c.into_owned()).collect();
    let y = forward(&params, &es, &input)?;
    let out_m = DMatrix::from_columns(&y);
    match sink.format {
        Format::Csv => {
            let mut out = csv_header(args)?;
            for row in out_m.row_iter() {
                out.push_str(&csv_row(&row.iter().map(|&v| num(v)).collect::<Vec<_>>()));
            }
            sink.write(&out)
        }
        Format::Json => {
            let cols: Vec<Vec<f64>> = y.iter().map(|s| s.iter().copied().collect()).collect();
            sink.write(&json_report(args, &json!({ "output": cols }))?)
        }
    }
}

fn perturbation_for(
    op: &SymmetricOperator,
    path: Option<&Path>,
    epsilon: Option<f64>,
    seed: u64,
) -> Result<SymmetricOperator> {
    match (path, epsilon) {
        (Some(p), _) => Ok(read_operator(p)?),
        (None, Some(e)) => Ok(random_symmetric_perturbation(op.dim(), e, seed)?),
        (None, None) => Err(usage("need --perturbation or --epsilon")),
    }
}

#[derive(Serialize)]
struct Resolved<'a, A: Serialize> {
    seed: u64,
    #[serde(flatten)]
    args: &'a A,
}

pub fn weyl_check(args: &WeylCheckArgs, seed: Option<u64>, sink: &Sink) -> Result<()> {
    if let Some(path) = &args.config {
        let mut cfg: WeylTrialConfig = load_config(path)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let recs = run_weyl_trials(&cfg)?;
        let violations = recs.iter().filter(|r| !r.report.holds).count();
        return match sink.format {
            Format::Json => sink.write(&json_report(
                &cfg,
                &json!({ "violations": violations, "trials": recs }),
            )?),
            Format::Csv => {
                let mut out = csv_header(&cfg)?;
                out.push_str("trial,dimension,epsilon,max_shift,norm_a,holds\n");
                for (i, r) in recs.iter().enumerate() {
                    out.push_str(&csv_row(&[
                        i.to_string(),
                        r.dimension.to_string(),
                        num(r.epsilon),
                        num(r.report.max_shift),
                        num(r.report.norm_a),
                        r.report.holds.to_string(),
                    ]));
                }
                sink.write(&out)
            }
        };
    }
    let seed = seed.unwrap_or(0);
    let op = read_operator(
        args.matrix
            .as_deref()
            .ok_or_else(|| usage("need --matrix or --config"))?,
    )?;
    let a = perturbation_for(&op, args.perturbation.as_deref(), args.epsilon, seed)?;
    let rep = fdtnet::perturbation::weyl_check(&op, &a)?;
    single_report(&Resolved { seed, args }, &rep, sink)
}

fn single_report<C: Serialize, R: Serialize>(config: &C, rep: &R, sink: &Sink) -> Result<()> {
    match sink.format {
        Format::Json => sink.write(&json_report(config, rep)?),
        Format::Csv => {
            let v = serde_json::to_value(rep).map_err(fdtnet::Error::from)?;
            let obj = v
                .as_object()
                .ok_or_else(|| usage("report is not an object"))?;
            let mut out = csv_header(config)?;
            out.push_str(&csv_row(&obj.keys().cloned().collect::<Vec<_>>()));
            let cells = obj
                .values()
                .map(|x| match x.as_f64() {
                    Some(f) if !x.is_boolean() => num(f),
                    _ => x.to_string(),
                })
                .collect::<Vec<_>>();
            out.push_str(&csv_row(&cells));
            sink.write(&out)
        }
    }
}

fn parse_range(s: &str) -> Result<std::ops::Range<usize>> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| usage(format!("cluster must be start:end, got {s:?}")))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| usage(format!("bad cluster bound {t:?}")))
    };
    Ok(parse(a)?..parse(b)?)
}

pub fn dk_check(args: &DkCheckArgs, seed: Option<u64>, sink: &Sink) -> Result<()> {
    if let Some(path) = &args.config {
        let mut cfg: DavisKahanTrialConfig = load_config(path)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let recs = run_davis_kahan_trials(&cfg)?;
        let violations = recs.iter().filter(|r| !r.report.holds).count();
        return match sink.format {
            Format::Json => sink.write(&json_report(
                &cfg,
                &json!({ "violations": violations, "trials": recs }),
            )?),
            Format::Csv => {
                let mut out = csv_header(&cfg)?;
                out.push_str("trial,dimension,cluster_start,cluster_end,gap,norm_a,projector_diff,bound,holds\n");
                for (i, r) in recs.iter().enumerate() {
                    out.push_str(&csv_row(&[
                        i.to_string(),
                        r.dimension.to_string(),
                        r.cluster_start.to_string(),
                        r.cluster_end.to_string(),
                        num(r.report.gap),
                        num(r.report.norm_a),
                        num(r.report.projector_diff),
                        num(r.report.bound),
                        r.report.holds.to_string(),
                    ]));
                }
                sink.write(&out)
            }
        };
    }
    let seed = seed.unwrap_or(0);
    let op = read_operator(
        args.matrix
            .as_deref()
            .ok_or_else(|| usage("need --matrix or --config"))?,
    )?;
    let a = perturbation_for(&op, args.perturbation.as_deref(), args.epsilon, seed)?;
    let cluster = match (&args.cluster, args.alpha, args.index) {
        (Some(c), _, _) => parse_range(c)?,
        (None, Some(alpha), Some(i)) => {
            let vals = sym_eig(&op)?.eigenvalues().to_vec();
            partition_spectrum(&vals, alpha)?
                .clusters()
                .into_iter()
                .find(|r| r.contains(&i))
                .ok_or_else(|| usage(format!("index {i} is outside the spectrum")))?
        }
        _ => return Err(usage("need --cluster start:end, or --alpha with --index")),
    };
    let rep = davis_kahan_check(&op, &a, cluster)?;
    single_report(&Resolved { seed, args }, &rep, sink)
}

pub fn weyl_law(args: &WeylLawArgs, sink: &Sink) -> Result<()> {
    let sources = [
        args.cycle.is_some(),
        args.torus.is_some(),
        args.matrix.is_some(),
        args.eigenvalues.is_some(),
    ];
    let mut body = serde_json::Map::new();
    match sources.iter().filter(|&&b| b).count() {
        0 => {}
        1 => {
            let vals = if let Some(n) = args.cycle {
                sym_eig(&build_cycle_laplacian(n)?)?.eigenvalues().to_vec()
            } else if let Some(t) = &args.torus {
                let (a, b) = t
                    .split_once(['x', 'X'])
                    .ok_or_else(|| usage(format!("torus must be NXxNY, got {t:?}")))?;
                let p = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| usage(format!("bad torus size {s:?}")))
                };
                sym_eig(&build_torus_laplacian(p(a)?, p(b)?)?)?
                    .eigenvalues()
                    .to_vec()
            } else {
                eigenvalues_from(args.eigenvalues.as_deref(), args.matrix.as_deref())?
            };
            let n = vals.len();
            let k_lo = args.k_lo.unwrap_or(1);
            let k_hi = args.k_hi.unwrap_or(n.saturating_sub(1));
            body.insert("eigenvalue_count".into(), json!(n));
            body.insert("k_lo".into(), json!(k_lo));
            body.insert("k_hi".into(), json!(k_hi));
            body.insert("slope".into(), json!(weyl_law_fit(&vals, k_lo, k_hi)?));
        }
        _ => {
            return Err(usage(
                "give only one of --cycle, --torus, --matrix, --eigenvalues",
            ))
        }
    }
    if let Some(d) = args.dim {
        let (alpha, c1, vol) = match (args.alpha, args.c1, args.volume) {
            (Some(a), Some(c), Some(v)) => (a, c, v),
            _ => return Err(usage("--dim needs --alpha, --c1 and --volume")),
        };
        body.insert("unit_ball_volume".into(), json!(unit_ball_volume(d)));
        body.insert(
            "gap_index".into(),
            json!(weyl_gap_index(alpha, d, c1, vol)?),
        );
    }
    if body.is_empty() {
        return Err(usage("nothing to do: give a spectrum source or --dim"));
    }
    single_report(args, &body, sink)
}

#[derive(Serialize)]
struct StabilityOutput<'a> {
    summary: fdtnet::perturbation::TrialSummary,
    trials: &'a [StabilityReport],
}

pub fn stability(
    args: &StabilityArgs,
    network: bool,
    seed: Option<u64>,
    sink: &Sink,
) -> Result<()> {
    let mut cfg: StabilityTrialConfig = load_config(&args.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let reports = if network {
        run_nn_stability_trials(&cfg)?
    } else {
        run_filter_stability_trials(&cfg)?
    };
    let summary = summarize(&reports);
    if let Some(p) = &args.summary {
        fs::write(p, json_report(&cfg, &summary)?).map_err(fdtnet::Error::from)?;
    }
    match sink.format {
        Format::Json => sink.write(&json_report(
            &cfg,
            &StabilityOutput {
                summary,
                trials: &reports,
            },
        )?),
        Format::Csv => {
            let mut out = csv_header(&cfg)?;
            out.push_str(&format!(
                "# summary: {}\n",
                serde_json::to_string(&summary).map_err(fdtnet::Error::from)?
            ));
            out.push_str(
                "trial,epsilon,alpha,D,N,B,empirical,bound,holds,dimension,layers,width\n",
            );
            for (i, r) in reports.iter().enumerate() {
                out.push_str(&csv_row(&[
                    i.to_string(),
                    num(r.epsilon),
                    num(r.alpha),
                    r.d_count.to_string(),
                    r.n_count.to_string(),
                    num(r.b_lipschitz),
                    num(r.empirical_diff),
                    num(r.theoretical_bound),
                    r.holds.to_string(),
                    r.dimension.to_string(),
                    r.layers.to_string(),
                    r.width.to_string(),
                ]));
            }
            sink.write(&out)
        }
    }
}

fn wireless_config(path: Option<&Path>, seed: Option<u64>) -> Result<WirelessConfig> {
    let mut cfg: WirelessConfig = match path {
        Some(p) => load_config(p)?,
        None => WirelessConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn wireless_train(args: &WirelessTrainArgs, seed: Option<u64>, sink: &Sink) -> Result<()> {
    let cfg = wireless_config(args.config.as_deref(), seed)?;
    let run = train_sweep(&cfg)?;
    match sink.format {
        Format::Json => {
            let mut text = serde_json::to_string_pretty(&run).map_err(fdtnet::Error::from)?;
            text.push('\n');
            sink.write(&text)
        }
        Format::Csv => {
            let mut out = csv_header(&cfg)?;
            out.push_str("layers,features,iteration,objective\n");
            for p in &run.policies {
                for (it, v) in p.history.iter().enumerate() {
                    out.push_str(&csv_row(&[
                        p.layers.to_string(),
                        p.features.to_string(),
                        it.to_string(),
                        num(*v),
                    ]));
                }
            }
            sink.write(&out)
        }
    }
}

pub fn wireless_eval(args: &WirelessEvalArgs, seed: Option<u64>, sink: &Sink) -> Result<()> {
    let run: TrainingRun = match (&args.run, &args.config) {
        (Some(p), _) => {
            let mut run: TrainingRun = read_json(p)?;
            if let Some(s) = seed {
                run.config.seed = s;
            }
            run
        }
        (None, cfg) => train_sweep(&wireless_config(cfg.as_deref(), seed)?)?,
    };
    let report = evaluate_perturbed(&run)?;
    let table = format!("{}{}", csv_header(&report.config)?, gap_table_csv(&report));
    if let Some(p) = &args.gap_table {
        fs::write(p, &table).map_err(fdtnet::Error::from)?;
    }
    match sink.format {
        Format::Json => {
            let mut text = serde_json::to_string_pretty(&report).map_err(fdtnet::Error::from)?;
            text.push('\n');
            sink.write(&text)
        }
        Format::Csv => sink.write(&table),
    }
}
