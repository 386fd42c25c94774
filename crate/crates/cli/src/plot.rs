//! Static SVG line plots of a recorded series and of bound curves.

use std::path::{Path, PathBuf};

use plotters::prelude::*;
use qlab_core::verifier::ehrenfest_residuals;
use qlab_core::{MassVector, ObservableSeries};

use crate::commands::{sibling_manifest, Outcome};
use crate::error::{CliError, Result};
use crate::manifest::{hash_from_comments, write_atomic};

const WIDTH: u32 = 800;
const HEIGHT: u32 = 500;
const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    fn new(label: impl Into<String>, x: &[f64], y: &[f64]) -> Self {
        Self {
            label: label.into(),
            points: x.iter().copied().zip(y.iter().copied()).collect(),
        }
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn plot_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Plot(e.to_string())
}

/// Render `curves` to an SVG string carrying `tag` as a comment.
pub fn line_chart(title: &str, x_label: &str, curves: &[Curve], tag: Option<&str>) -> Result<String> {
    let finite = curves
        .iter()
        .flat_map(|c| c.points.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return Err(CliError::Plot(format!("{title}: no finite points")));
    }
    let (x0, x1) = padded(x0, x1);
    let (y0, y1) = padded(y0, y1);
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (WIDTH, HEIGHT)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(80)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_label_formatter(&|v| format!("{v:.3e}"))
            .draw()
            .map_err(plot_err)?;
        for (k, c) in curves.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            chart
                .draw_series(LineSeries::new(
                    c.points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()),
                    color.stroke_width(2),
                ))
                .map_err(plot_err)?
                .label(c.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    if let Some(tag) = tag {
        if let Some(end) = svg.find('>') {
            svg.insert_str(end + 1, &format!("\n<!-- {tag} -->"));
        }
    }
    Ok(svg)
}

/// Plot a series CSV (and optionally a bound report) into `out_dir`.
pub fn cmd_plot(series_path: &Path, bound_path: Option<&Path>, out_dir: &Path) -> Result<Outcome> {
    let file = std::fs::File::open(series_path)
        .map_err(|e| CliError::io(format!("reading {}", series_path.display()), e))?;
    let (series, comments) = ObservableSeries::read_csv(file).map_err(|e| CliError::Parse {
        file: series_path.display().to_string(),
        msg: e.to_string(),
    })?;
    if series.is_empty() {
        return Err(CliError::Parse {
            file: series_path.display().to_string(),
            msg: "no records".into(),
        });
    }
    let hash = hash_from_comments(&comments);
    let tag = hash.as_ref().map(|h| format!("manifest={h}"));
    let tag = tag.as_deref();
    let d = series.dims();
    let t = series.times();

    let mut outputs: Vec<(&str, String)> = Vec::new();
    let mut means = Vec::new();
    for j in 0..d {
        means.push(Curve::new(format!("<X_{}>", j + 1), &t, &series.column(|r| r.x_mean[j])));
        means.push(Curve::new(format!("<P_{}>", j + 1), &t, &series.column(|r| r.p_mean[j])));
    }
    outputs.push(("means.svg", line_chart("means", "t", &means, tag)?));

    let mut norms = vec![
        Curve::new("norm", &t, &series.column(|r| r.norm)),
        Curve::new("|H psi|", &t, &series.column(|r| r.h_opnorm)),
    ];
    for j in 0..d {
        norms.push(Curve::new(format!("|X_{} psi|", j + 1), &t, &series.column(|r| r.x_opnorm[j])));
    }
    outputs.push(("norms.svg", line_chart("operator norms", "t", &norms, tag)?));

    let mut notes = Vec::new();
    if series.len() >= 5 {
        let masses = hash
            .as_deref()
            .and_then(|h| sibling_manifest(series_path, h))
            .and_then(|m| serde_json::from_value::<Vec<f64>>(m.effective["masses"].clone()).ok());
        if masses.is_none() {
            notes.push("no matching manifest.json; residuals assume unit masses".to_string());
        }
        let masses = MassVector::new(masses.unwrap_or_else(|| vec![1.0; d]))?;
        let rep = ehrenfest_residuals(&series, &masses, f64::INFINITY, 0.0)?;
        let keep: Vec<usize> = (0..t.len()).filter(|k| !rep.edge[*k]).collect();
        let pick = |v: &[f64]| keep.iter().map(|&k| v[k]).collect::<Vec<f64>>();
        let tk = pick(&t);
        let mut res = Vec::new();
        for a in &rep.per_axis {
            res.push(Curve::new(format!("r1_{}", a.axis + 1), &tk, &pick(&a.r1)));
            res.push(Curve::new(format!("r2_{}", a.axis + 1), &tk, &pick(&a.r2)));
        }
        outputs.push(("residuals.svg", line_chart("Ehrenfest residuals", "t", &res, tag)?));
    } else {
        notes.push(format!("{} records; residuals need at least 5", series.len()));
    }

    if let Some(bp) = bound_path {
        let text = std::fs::read_to_string(bp).map_err(|e| CliError::io(format!("reading {}", bp.display()), e))?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Parse {
            file: bp.display().to_string(),
            msg: e.to_string(),
        })?;
        let col = |key: &str| -> Result<Vec<f64>> {
            serde_json::from_value(v["result"][key].clone()).map_err(|_| CliError::Parse {
                file: bp.display().to_string(),
                msg: format!("missing column 'result.{key}'"),
            })
        };
        let (alphas, c) = (col("alphas")?, col("c_alpha")?);
        let bound_tag = v["provenance"]["manifest_hash"].as_str().map(|h| format!("manifest={h}"));
        outputs.push((
            "c_alpha.svg",
            line_chart("C(alpha)", "alpha", &[Curve::new("C(alpha)", &alphas, &c)], bound_tag.as_deref())?,
        ));
    }

    let mut files: Vec<PathBuf> = Vec::new();
    for (name, svg) in &outputs {
        files.push(write_atomic(out_dir, name, svg.as_bytes())?);
    }
    let mut summary = notes;
    summary.extend(files.iter().map(|f| format!("wrote {}", f.display())));
    Ok(Outcome {
        passed: true,
        summary,
        files,
    })
}
