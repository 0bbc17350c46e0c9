//! Report emission: ROC curves as CSV and SVG, per-frame detection
//! score tables, confusion matrices and track continuity reports.
//! CSV is the canonical machine-readable output; the SVG plots are
//! self-contained with no external plotting dependency.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::classify::{ClassificationRates, ConfusionMatrix};
use crate::detect::{FrameDetectionScore, RocCurve};
use crate::track::TrackScore;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv {
        path: path.display().to_string(),
        source,
    }
}

/// CSV with header `threshold,far,dr`, one row per operating point in
/// decreasing-threshold order.
pub fn write_roc_csv(path: &Path, curve: &RocCurve) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["threshold", "far", "dr"]).map_err(csv_err(path))?;
    for p in &curve.points {
        w.write_record([p.threshold.to_string(), p.far.to_string(), p.dr.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_roc_csv(path: &Path) -> Result<RocCurve, ReportError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut points = Vec::new();
    for record in r.records() {
        let record = record.map_err(csv_err(path))?;
        let parse = |i: usize| -> f64 {
            record
                .get(i)
                .and_then(|s| s.parse().ok())
                .unwrap_or(f64::NAN)
        };
        points.push(crate::detect::RocPoint {
            threshold: parse(0),
            far: parse(1),
            dr: parse(2),
        });
    }
    Ok(RocCurve { points })
}

/// Per-frame TP/FA/miss/MT/MO rows plus a trailing totals row.
pub fn write_frame_scores_csv(
    path: &Path,
    rows: &[(u64, FrameDetectionScore)],
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["frame", "tp", "fa", "miss", "mt", "mo"])
        .map_err(csv_err(path))?;
    let mut total = FrameDetectionScore::default();
    for (frame, s) in rows {
        w.write_record([
            frame.to_string(),
            s.true_positives.to_string(),
            s.false_alarms.to_string(),
            s.missed.to_string(),
            s.mt_count.to_string(),
            s.mo_count.to_string(),
        ])
        .map_err(csv_err(path))?;
        total.true_positives += s.true_positives;
        total.false_alarms += s.false_alarms;
        total.missed += s.missed;
        total.mt_count += s.mt_count;
        total.mo_count += s.mo_count;
    }
    w.write_record([
        "total".to_string(),
        total.true_positives.to_string(),
        total.false_alarms.to_string(),
        total.missed.to_string(),
        total.mt_count.to_string(),
        total.mo_count.to_string(),
    ])
    .map_err(csv_err(path))?;
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Square matrix with a label header row and a label first column.
pub fn write_confusion_csv(path: &Path, matrix: &ConfusionMatrix) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(matrix.labels().iter().cloned());
    w.write_record(&header).map_err(csv_err(path))?;
    for (i, label) in matrix.labels().iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend(matrix.counts()[i].iter().map(u64::to_string));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_rates_json(path: &Path, rates: &ClassificationRates) -> Result<(), ReportError> {
    let text = serde_json::to_string_pretty(rates)?;
    std::fs::write(path, text).map_err(io_err(path))
}

/// `{"fit": n, "fio": n, "objects": {...}, "trackers": {...}}`.
pub fn write_track_json(path: &Path, score: &TrackScore) -> Result<(), ReportError> {
    let value = serde_json::json!({
        "fit": score.fit_count,
        "fio": score.fio_count,
        "objects": score.per_object_tracker_history,
        "trackers": score.per_tracker_object_history,
    });
    std::fs::write(path, serde_json::to_string_pretty(&value)?).map_err(io_err(path))
}

const SVG_COLORS: [&str; 6] = [
    "#1965b0", "#dc050c", "#4eb265", "#f7a600", "#882e72", "#777777",
];

/// Staircase ROC plot of one or more labeled curves.
pub fn roc_svg(curves: &[(String, &RocCurve)]) -> String {
    let (width, height) = (640.0, 480.0);
    let (ml, mr, mt, mb) = (62.0, 18.0, 22.0, 48.0);
    let (pw, ph) = (width - ml - mr, height - mt - mb);
    let far_max = curves
        .iter()
        .flat_map(|(_, c)| c.points.iter().map(|p| p.far))
        .fold(0.0, f64::max)
        .max(1e-9)
        * 1.05;
    let x = |far: f64| ml + pw * (far / far_max);
    let y = |dr: f64| mt + ph * (1.0 - dr);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + ph,
        ml + pw,
        mt + ph
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + ph
    ));
    // ticks
    for i in 0..=5 {
        let dr = i as f64 / 5.0;
        let yy = y(dr);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{yy}\" x2=\"{ml}\" y2=\"{yy}\" stroke=\"black\"/>\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{dr:.1}</text>\n",
            ml - 4.0,
            ml - 8.0,
            yy + 4.0
        ));
        let far = far_max * i as f64 / 5.0;
        let xx = x(far);
        svg.push_str(&format!(
            "<line x1=\"{xx}\" y1=\"{}\" x2=\"{xx}\" y2=\"{}\" stroke=\"black\"/>\
             <text x=\"{xx}\" y=\"{}\" text-anchor=\"middle\">{far:.2}</text>\n",
            mt + ph,
            mt + ph + 4.0,
            mt + ph + 18.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">false alarms per frame</text>\n",
        ml + pw / 2.0,
        height - 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">detection rate</text>\n",
        mt + ph / 2.0,
        mt + ph / 2.0
    ));

    for (idx, (label, curve)) in curves.iter().enumerate() {
        let color = SVG_COLORS[idx % SVG_COLORS.len()];
        let mut d = String::new();
        let mut prev: Option<(f64, f64)> = None;
        for p in &curve.points {
            let (px, py) = (x(p.far), y(p.dr));
            match prev {
                None => d.push_str(&format!("M {px:.2} {py:.2} ")),
                Some((_, ly)) => {
                    // staircase: horizontal to the new FAR, then vertical
                    d.push_str(&format!("L {px:.2} {ly:.2} L {px:.2} {py:.2} "));
                }
            }
            prev = Some((px, py));
        }
        svg.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            d.trim_end()
        ));
        for p in &curve.points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.2\" fill=\"{color}\"/>\n",
                x(p.far),
                y(p.dr)
            ));
        }
        let ly = mt + 16.0 + idx as f64 * 16.0;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"1.8\"/>\
             <text x=\"{}\" y=\"{}\">{label}</text>\n",
            ml + pw - 150.0,
            ml + pw - 126.0,
            ml + pw - 120.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_roc_svg(path: &Path, curves: &[(String, &RocCurve)]) -> Result<(), ReportError> {
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    file.write_all(roc_svg(curves).as_bytes()).map_err(io_err(path))
}
