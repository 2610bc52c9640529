use activemars::cmatrix::{ComputeOptions, Scale};
use activemars::oracle::{mc_c, quad_c};
use activemars::subspace::subspace_error;
use activemars::{compute_c, CMatrix, RunManifest};
use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use crate::commands::{finish, load_model, load_prior, write_json};
use crate::{Ctx, VerificationFailed, VerifyArgs};

const QUAD_TOL: f64 = 1e-10;
const QUAD_MAX_P: usize = 8;
const WORST_ENTRIES: usize = 10;

#[derive(Debug, Serialize)]
struct EntryReport {
    i: usize,
    j: usize,
    closed_form: f64,
    monte_carlo: f64,
    std_error: f64,
    se_multiple: f64,
}

#[derive(Debug, Serialize)]
struct QuadReport {
    frobenius_gap: f64,
    threshold: f64,
    evaluations: u64,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct Report {
    p: usize,
    n_basis: usize,
    source: &'static str,
    mc_samples: usize,
    seed: u64,
    error: f64,
    se_norm: f64,
    se_multiple: f64,
    max_entry_se_multiple: f64,
    threshold_se: f64,
    mc_pass: bool,
    quadrature: Option<QuadReport>,
    worst_entries: Vec<EntryReport>,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<serde_json::Value>,
}

fn se_ratio(delta: f64, se: f64) -> f64 {
    if se > 0.0 {
        delta.abs() / se
    } else if delta == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn native_values(c: &CMatrix, model: &activemars::MarsModel) -> Result<DMatrix<f64>> {
    match (c.scale, model.input_transform()) {
        (Scale::Unit, Some(t)) => Ok(t.pull_cmatrix(&c.values)),
        _ => Ok(c.values.clone()),
    }
}

pub fn verify(ctx: &Ctx, a: &VerifyArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let prior = load_prior(&a.prior)?;
    let (closed, source) = match &a.cmatrix {
        Some(path) => {
            let c = CMatrix::load(path).with_context(|| format!("reading {}", path.display()))?;
            if c.p() != model.p() {
                bail!("matrix file has p = {}, model has p = {}", c.p(), model.p());
            }
            if c.model_digest != model.digest() || c.prior_digest != prior.digest() {
                eprintln!("warning: matrix file digests do not match the given model and prior");
            }
            (native_values(&c, &model)?, "file")
        }
        None => (
            compute_c(&model, &prior, &ComputeOptions::default())?.values,
            "closed_form",
        ),
    };
    let p = model.p();

    let mc = mc_c(&model, &prior, a.mc_samples, a.seed)?;
    let se = mc
        .std_error
        .as_ref()
        .expect("monte carlo reports standard errors");
    let delta = &closed - &mc.value;
    let error = subspace_error(&closed, &mc.value)?;
    let se_norm = se.norm() / p as f64;
    let se_multiple = se_ratio(delta.norm(), se.norm());
    let mc_pass = se_multiple <= a.max_se;

    let mut entries: Vec<EntryReport> = (0..p)
        .flat_map(|i| (i..p).map(move |j| (i, j)))
        .map(|(i, j)| EntryReport {
            i,
            j,
            closed_form: closed[(i, j)],
            monte_carlo: mc.value[(i, j)],
            std_error: se[(i, j)],
            se_multiple: se_ratio(delta[(i, j)], se[(i, j)]),
        })
        .collect();
    entries.sort_by(|x, y| {
        y.se_multiple
            .total_cmp(&x.se_multiple)
            .then((x.i, x.j).cmp(&(y.i, y.j)))
    });
    let max_entry = entries.first().map_or(0.0, |e| e.se_multiple);

    let quadrature = if !a.no_quad && p <= QUAD_MAX_P {
        let q = quad_c(&model, &prior, QUAD_TOL)?;
        let gap = (&closed - &q.value).norm();
        Some(QuadReport {
            frobenius_gap: gap,
            threshold: a.quad_gap,
            evaluations: q.evaluations,
            pass: gap <= a.quad_gap,
        })
    } else {
        None
    };
    let pass = mc_pass && quadrature.as_ref().is_none_or(|q| q.pass);
    if pass {
        entries.clear();
    } else {
        entries.truncate(WORST_ENTRIES);
    }

    println!(
        "verify: p = {p}, M = {}, source = {source}",
        model.n_basis()
    );
    println!(
        "monte carlo: N = {}, seed = {}, error = {error:.6e}, SE = {se_norm:.6e}, {se_multiple:.3} SE (max entry {max_entry:.3} SE), threshold {} SE: {}",
        a.mc_samples,
        a.seed,
        a.max_se,
        if mc_pass { "PASS" } else { "FAIL" }
    );
    match &quadrature {
        Some(q) => println!(
            "quadrature: gap = {:.6e}, threshold {:e}: {}",
            q.frobenius_gap,
            q.threshold,
            if q.pass { "PASS" } else { "FAIL" }
        ),
        None => println!("quadrature: skipped"),
    }
    if !entries.is_empty() {
        println!("worst entries:");
        for e in &entries {
            println!(
                "  C[{},{}] closed = {:.6e}, mc = {:.6e} +/- {:.2e} ({:.2} SE)",
                e.i, e.j, e.closed_form, e.monte_carlo, e.std_error, e.se_multiple
            );
        }
    }
    println!("{}", if pass { "PASS" } else { "FAIL" });

    if let Some(path) = &a.report {
        let mut m = RunManifest::new(
            "verify",
            json!({ "mc_samples": a.mc_samples, "max_se": a.max_se, "quad_gap": a.quad_gap, "no_quad": a.no_quad }),
        )
        .input("model", model.digest())
        .input("prior", prior.digest())
        .seed(a.seed);
        if let Some(c) = &a.cmatrix {
            m = m.input(
                "cmatrix",
                activemars::format::digest(&CMatrix::load(c)?.to_file()),
            );
        }
        let report = Report {
            p,
            n_basis: model.n_basis(),
            source,
            mc_samples: a.mc_samples,
            seed: a.seed,
            error,
            se_norm,
            se_multiple,
            max_entry_se_multiple: max_entry,
            threshold_se: a.max_se,
            mc_pass,
            quadrature,
            worst_entries: entries,
            pass,
            manifest: Some(finish(ctx, m)),
        };
        write_json(path, &report)?;
    }
    if pass {
        Ok(())
    } else {
        Err(VerificationFailed.into())
    }
}
