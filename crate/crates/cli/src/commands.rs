use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use activemars::cmatrix::{Assembly, ComputeOptions, Scale};
use activemars::model::{read_dataset_csv, read_matrix_csv, ModelFile};
use activemars::partition::DEFAULT_MIN_VOLUME;
use activemars::prior::PriorFile;
use activemars::subspace::{activity_scores, project, write_projection_csv};
use activemars::{
    compute_c_timed, decompose, fit_greedy, partition as partition_boxes, standardize, to_prior,
    AffineMap, CMatrix, DatasetSpec, DimensionPolicy, FitConfig, LinearConstraintSet, MarsModel,
    PriorSpec, RunManifest,
};
use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use crate::{ComputeArgs, Ctx, DimArg, FitArgs, PartitionArgs, SubspaceArgs};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value)?;
    std::fs::write(path, s + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn finish(ctx: &Ctx, mut m: RunManifest) -> serde_json::Value {
    if ctx.record_timing {
        m.wall_time_seconds = Some(ctx.start.elapsed().as_secs_f64());
    }
    m.to_value()
}

pub fn load_model(path: &Path) -> Result<MarsModel> {
    MarsModel::load(path).with_context(|| format!("reading model {}", path.display()))
}

pub fn load_prior(path: &Path) -> Result<PriorSpec> {
    PriorSpec::load(path).with_context(|| format!("reading prior {}", path.display()))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

/// Whitens against a Gaussian prior, then maps the whitened sample onto the
/// unit cube with a diagonal rescale.
fn whitening_transform(data: &DatasetSpec, prior: &PriorSpec) -> Result<AffineMap> {
    let PriorSpec::Mvn { mean, cov } = prior else {
        bail!("--whiten needs a Gaussian (mvn) prior");
    };
    let (w, _) = standardize(mean, cov)?;
    let rows: Vec<Vec<f64>> = (0..data.n())
        .map(|r| w.apply(&data.design().row(r).iter().copied().collect::<Vec<_>>()))
        .collect();
    let scaled = DatasetSpec::from_rows(&rows, data.response().to_vec())?.unit_scaling();
    let d = scaled.matrix();
    let matrix = &d * w.matrix();
    let offset: Vec<f64> = (&d * nalgebra::DVector::from_column_slice(w.offset()))
        .iter()
        .zip(scaled.offset())
        .map(|(a, b)| a + b)
        .collect();
    Ok(AffineMap::dense(matrix, offset)?)
}

pub fn fit(ctx: &Ctx, a: &FitArgs) -> Result<()> {
    let data = read_dataset_csv(open(&a.data)?)
        .with_context(|| format!("reading {}", a.data.display()))?;
    let mut manifest_inputs = Vec::new();
    let input_transform = if a.unit_scale {
        Some(data.unit_scaling())
    } else if let Some(path) = &a.whiten {
        let prior = load_prior(path)?;
        manifest_inputs.push(("whiten_prior", prior.digest()));
        Some(whitening_transform(&data, &prior)?)
    } else {
        None
    };
    let config = FitConfig {
        max_basis: a.max_basis,
        max_interaction: a.max_interaction,
        knot_grid_size: a.knot_grid,
        input_transform,
        ..FitConfig::default()
    };
    let model = fit_greedy(&data, &config)?;
    let pred = model.predict(data.design())?;
    let rmse = (pred
        .iter()
        .zip(data.response())
        .map(|(f, y)| (f - y).powi(2))
        .sum::<f64>()
        / data.n() as f64)
        .sqrt();

    let mut m = RunManifest::new(
        "fit",
        json!({
            "max_basis": a.max_basis,
            "max_interaction": a.max_interaction,
            "knot_grid": a.knot_grid,
            "unit_scale": a.unit_scale,
            "whiten": a.whiten.is_some(),
            "n": data.n(),
        }),
    )
    .input("data", dataset_digest(&data));
    for (role, d) in manifest_inputs {
        m = m.input(role, d);
    }
    let mut file = ModelFile::from(&model);
    file.manifest = Some(finish(ctx, m));
    write_json(&a.out, &file)?;
    println!(
        "fitted M = {} basis functions on n = {}, p = {}",
        model.n_basis(),
        data.n(),
        data.p()
    );
    println!("training RMSE = {rmse:.6e}");
    Ok(())
}

fn dataset_digest(d: &DatasetSpec) -> String {
    let rows: Vec<Vec<f64>> = d
        .design()
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    activemars::format::digest(&(rows, d.response()))
}

pub fn compute_c(ctx: &Ctx, a: &ComputeArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let prior = load_prior(&a.prior)?;
    let assembly = match (a.low_memory, a.hadamard_eps) {
        (true, _) => Assembly::LowMemory,
        (false, Some(eps)) => Assembly::Hadamard { eps },
        (false, None) => Assembly::Cached,
    };
    let scale = if a.scale == "unit" {
        Scale::Unit
    } else {
        Scale::Native
    };
    let (c, timing) = compute_c_timed(&model, &prior, &ComputeOptions { assembly, scale })?;
    let m = RunManifest::new(
        "compute-c",
        json!({ "low_memory": a.low_memory, "hadamard_eps": a.hadamard_eps, "scale": a.scale }),
    )
    .input("model", model.digest())
    .input("prior", prior.digest());
    let mut file = c.to_file();
    file.manifest = Some(finish(ctx, m));
    write_json(&a.out, &file)?;
    if let Some(path) = &a.csv {
        c.write_csv(BufWriter::new(File::create(path)?))?;
    }
    println!("C: p = {}, M = {}", c.p(), model.n_basis());
    eprintln!(
        "time: integrals {:.3} s, assembly {:.3} s",
        timing.integrals.as_secs_f64(),
        timing.assembly.as_secs_f64()
    );
    Ok(())
}

fn fmt_vec(v: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = v.into_iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn subspace(ctx: &Ctx, a: &SubspaceArgs) -> Result<()> {
    let c =
        CMatrix::load(&a.cmatrix).with_context(|| format!("reading {}", a.cmatrix.display()))?;
    let mut s = decompose(&c)?;
    let policy = match (a.energy, a.dim) {
        (Some(fraction), _) => DimensionPolicy::Energy { fraction },
        (None, DimArg::Auto) => DimensionPolicy::Gap,
        (None, DimArg::Fixed(r)) => DimensionPolicy::Fixed { r },
    };
    let choice = s.choose(policy)?;
    if let Some(w) = &choice.warning {
        eprintln!("warning: {w}");
    }
    if s.clamped > 0 {
        eprintln!(
            "warning: clamped {} slightly negative eigenvalue(s) to zero",
            s.clamped
        );
    }
    if a.activity && choice.r > 0 {
        s.activity_scores = Some(activity_scores(&s, choice.r, None, a.normalize)?);
    }

    println!("eigenvalues = {}", fmt_vec(s.eigenvalues.iter().copied()));
    println!("chosen dimension r = {}", choice.r);
    if s.p() > 0 {
        println!("w1 = {}", fmt_vec(s.eigenvectors.column(0).iter().copied()));
    }
    if let Some(scores) = &s.activity_scores {
        println!("activity scores = {}", fmt_vec(scores.iter().copied()));
    }

    if let (Some(data), Some(out)) = (&a.project, &a.projection_out) {
        if choice.r == 0 {
            bail!("cannot project onto a zero-dimensional subspace");
        }
        let m =
            read_matrix_csv(open(data)?).with_context(|| format!("reading {}", data.display()))?;
        let p = s.p();
        let (x, y): (DMatrix<f64>, Option<Vec<f64>>) = match m.ncols() {
            n if n == p => (m, None),
            n if n == p + 1 => (m.columns(0, p).into_owned(), Some(m.column(p).iter().copied().collect())),
            n => bail!("projection data has {n} columns; expected {p} inputs, optionally followed by a response"),
        };
        let u = project(&s, &x)?;
        write_projection_csv(&u, y.as_deref(), BufWriter::new(File::create(out)?))?;
        println!(
            "projected {} rows onto {} coordinates",
            u.nrows(),
            u.ncols()
        );
    }

    if let Some(out) = &a.out {
        let m = RunManifest::new(
            "subspace",
            json!({ "policy": policy, "activity": a.activity, "normalize": a.normalize }),
        )
        .input("cmatrix", activemars::format::digest(&c.to_file()));
        let mut file = s.to_file();
        file.manifest = Some(finish(ctx, m));
        write_json(out, &file)?;
    }
    Ok(())
}

pub fn partition(ctx: &Ctx, a: &PartitionArgs) -> Result<()> {
    let constraints = LinearConstraintSet::load(&a.constraints)
        .with_context(|| format!("reading constraints {}", a.constraints.display()))?;
    let volumes = if a.min_volume.is_empty() {
        vec![DEFAULT_MIN_VOLUME]
    } else {
        a.min_volume.clone()
    };
    let mut last = None;
    for &v in &volumes {
        let bp = partition_boxes(&constraints, v, a.split_dims.as_deref())?;
        println!(
            "min_volume = {v:e}: L = {} boxes, covered_volume = {:.6}",
            bp.len(),
            bp.covered_volume
        );
        last = Some((v, bp));
    }
    let (v, bp) = last.expect("at least one volume");
    if bp.is_empty() {
        bail!("empty region: no box of volume >= {v:e} satisfies the constraints");
    }
    let prior = to_prior(&bp)?;
    let config = json!({ "min_volume": v, "split_dims": bp.split_dims });
    let m = RunManifest::new("partition", config).input("constraints", constraints.digest());
    let mut file = PriorFile::from(&prior);
    file.manifest = Some(finish(ctx, m.clone()));
    write_json(&a.out, &file)?;
    if let Some(path) = &a.boxes {
        let mut boxes = bp.to_file(&constraints);
        boxes.manifest = Some(finish(ctx, m));
        write_json(path, &boxes)?;
    }
    Ok(())
}
