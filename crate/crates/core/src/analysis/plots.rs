use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use super::barycentric_weights;
use crate::error::{Error, Result};
use crate::format::sig9;
use crate::metrics::{MetricKind, MetricReport};

/// Per-object attributes for the magnitude scatter plot.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectAnalysis {
    pub object: String,
    pub material_class: String,
    pub outside_fov: bool,
    pub magnitude: Option<f64>,
    pub incidence_median_deg: Option<f64>,
    pub rel_area: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PlotOptions {
    /// Sensor whose C1 mean goes into the scatter table.
    pub scatter_sensor: String,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            scatter_sensor: "radar".into(),
        }
    }
}

/// Five-number summary plus mean, with Tukey whiskers at 1.5·IQR.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data (R type 7).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn five_number_summary(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::Empty("boxplot values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("boxplot values".into()));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.5), quantile_sorted(&s, 0.75));
    let iqr = q3 - q1;
    let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || s.iter().copied().filter(|v| (fence_lo..=fence_hi).contains(v));
    Ok(BoxStats {
        n: s.len(),
        min: s[0],
        q1,
        median,
        q3,
        max: s[s.len() - 1],
        mean: s.iter().sum::<f64>() / s.len() as f64,
        whisker_lo: inside().next().unwrap_or(q1),
        whisker_hi: inside().next_back().unwrap_or(q3),
        outliers: s.iter().copied().filter(|v| !(fence_lo..=fence_hi).contains(v)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxplotRow {
    pub sensor: String,
    pub metric: MetricKind,
    pub distance_cm: u32,
    pub stats: BoxStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterRow {
    pub object: String,
    pub material_class: String,
    pub magnitude: Option<f64>,
    pub c1_mean_cm: Option<f64>,
    pub incidence_median_deg: Option<f64>,
    pub rel_area: Option<f64>,
    pub outside_fov: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaryRow {
    pub triple_id: usize,
    pub metric: MetricKind,
    pub distance_cm: u32,
    pub object: String,
    pub labels: [String; 3],
    pub weights: [f64; 3],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotTables {
    pub boxplot: Vec<BoxplotRow>,
    pub scatter: Vec<ScatterRow>,
    pub barycentric: Vec<BaryRow>,
}

/// Aggregates per-capture reports into the three plot tables.
///
/// Boxplots collect the per-object mean of each (sensor, metric, distance).
/// Barycentric rows are emitted for every 3-subset of the sensors (in name
/// order) and every unsigned metric, for objects where all three sensors
/// have a mean at that distance and not all three are zero.
pub fn build_plot_tables(reports: &[MetricReport], objects: &[ObjectAnalysis], opts: &PlotOptions) -> PlotTables {
    let mut groups: BTreeMap<(String, MetricKind, u32), Vec<f64>> = BTreeMap::new();
    // (metric, distance) -> object -> sensor -> mean
    let mut by_object: BTreeMap<(MetricKind, u32), BTreeMap<&str, BTreeMap<&str, f64>>> = BTreeMap::new();
    let mut sensors = BTreeSet::new();
    for r in reports {
        sensors.insert(r.sensor.as_str());
        let d = r.distance.centimeters();
        for m in &r.metrics {
            let Some(mean) = m.mean_cm else { continue };
            groups.entry((r.sensor.clone(), m.metric, d)).or_default().push(mean);
            by_object
                .entry((m.metric, d))
                .or_default()
                .entry(r.object.as_str())
                .or_default()
                .insert(r.sensor.as_str(), mean);
        }
    }

    let boxplot = groups
        .into_iter()
        .map(|((sensor, metric, distance_cm), values)| BoxplotRow {
            sensor,
            metric,
            distance_cm,
            stats: five_number_summary(&values).expect("nonempty finite group"),
        })
        .collect();

    let sensors: Vec<&str> = sensors.into_iter().collect();
    let mut triples = Vec::new();
    for a in 0..sensors.len() {
        for b in a + 1..sensors.len() {
            for c in b + 1..sensors.len() {
                triples.push([sensors[a], sensors[b], sensors[c]]);
            }
        }
    }
    let mut barycentric = Vec::new();
    for metric in MetricKind::UNSIGNED {
        for (&(m, distance_cm), per_object) in &by_object {
            if m != metric {
                continue;
            }
            for (triple_id, labels) in triples.iter().enumerate() {
                for (object, means) in per_object {
                    let mu = labels.map(|s| means.get(s).copied());
                    let [Some(a), Some(b), Some(c)] = mu else { continue };
                    if let Ok(weights) = barycentric_weights([a, b, c]) {
                        barycentric.push(BaryRow {
                            triple_id,
                            metric,
                            distance_cm,
                            object: object.to_string(),
                            labels: labels.map(String::from),
                            weights,
                        });
                    }
                }
            }
        }
    }

    let scatter = objects
        .iter()
        .map(|o| {
            let c1: Vec<f64> = reports
                .iter()
                .filter(|r| r.object == o.object && r.sensor == opts.scatter_sensor)
                .filter_map(|r| r.mean_cm(MetricKind::C1))
                .collect();
            ScatterRow {
                object: o.object.clone(),
                material_class: o.material_class.clone(),
                magnitude: o.magnitude,
                c1_mean_cm: (!c1.is_empty()).then(|| c1.iter().sum::<f64>() / c1.len() as f64),
                incidence_median_deg: o.incidence_median_deg,
                rel_area: o.rel_area,
                outside_fov: o.outside_fov,
            }
        })
        .collect();

    PlotTables {
        boxplot,
        scatter,
        barycentric,
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(sig9).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `boxplot.csv`, `scatter.csv`, `barycentric.csv` and an SVG
/// rendering of each into `dir`.
pub fn write_plot_data(tables: &PlotTables, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(
        &dir.join("boxplot.csv"),
        &[
            "sensor", "metric", "distance_cm", "n", "min", "q1", "median", "q3", "max", "mean", "whisker_lo",
            "whisker_hi", "outliers",
        ],
        tables.boxplot.iter().map(|r| {
            let s = &r.stats;
            vec![
                r.sensor.clone(),
                r.metric.to_string(),
                r.distance_cm.to_string(),
                s.n.to_string(),
                sig9(s.min),
                sig9(s.q1),
                sig9(s.median),
                sig9(s.q3),
                sig9(s.max),
                sig9(s.mean),
                sig9(s.whisker_lo),
                sig9(s.whisker_hi),
                s.outliers.iter().map(|&v| sig9(v)).collect::<Vec<_>>().join(";"),
            ]
        }),
    )?;
    write_csv(
        &dir.join("scatter.csv"),
        &["object", "material_class", "magnitude", "C1_mean", "incidence_median_deg", "rel_area", "outside_fov"],
        tables.scatter.iter().map(|r| {
            vec![
                r.object.clone(),
                r.material_class.clone(),
                opt(r.magnitude),
                opt(r.c1_mean_cm),
                opt(r.incidence_median_deg),
                opt(r.rel_area),
                r.outside_fov.to_string(),
            ]
        }),
    )?;
    write_csv(
        &dir.join("barycentric.csv"),
        &["triple_id", "metric", "distance_cm", "object", "label_a", "label_b", "label_c", "w_a", "w_b", "w_c"],
        tables.barycentric.iter().map(|r| {
            let mut row = vec![r.triple_id.to_string(), r.metric.to_string(), r.distance_cm.to_string(), r.object.clone()];
            row.extend(r.labels.iter().cloned());
            row.extend(r.weights.iter().map(|&w| sig9(w)));
            row
        }),
    )?;
    for (name, svg) in [
        ("boxplot.svg", boxplot_svg(&tables.boxplot)),
        ("scatter.svg", scatter_svg(&tables.scatter)),
        ("barycentric.svg", barycentric_svg(&tables.barycentric)),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 40.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"10\">\n\
         <text x=\"{PAD}\" y=\"16\" font-size=\"12\">{title}</text>\n"
    )
}

fn y_scale(lo: f64, hi: f64) -> impl Fn(f64) -> f64 {
    let span = if hi > lo { hi - lo } else { 1.0 };
    move |v| H - PAD - (v - lo) / span * (H - 2.0 * PAD)
}

fn boxplot_svg(rows: &[BoxplotRow]) -> String {
    let mut out = svg_open("mean error per object [cm]");
    if !rows.is_empty() {
        let lo = rows.iter().map(|r| r.stats.min).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r.stats.max).fold(f64::NEG_INFINITY, f64::max);
        let y = y_scale(lo, hi);
        let slot = (W - 2.0 * PAD) / rows.len() as f64;
        for (i, r) in rows.iter().enumerate() {
            let s = &r.stats;
            let x = PAD + slot * (i as f64 + 0.5);
            let bw = (slot * 0.6).min(30.0);
            let _ = writeln!(
                out,
                "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
                y(s.whisker_lo),
                y(s.whisker_hi)
            );
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{bw:.2}\" height=\"{:.2}\" fill=\"#cde\" stroke=\"black\"/>",
                x - bw / 2.0,
                y(s.q3),
                (y(s.q1) - y(s.q3)).max(0.5)
            );
            let _ = writeln!(
                out,
                "<line x1=\"{:.2}\" y1=\"{m:.2}\" x2=\"{:.2}\" y2=\"{m:.2}\" stroke=\"black\" stroke-width=\"2\"/>",
                x - bw / 2.0,
                x + bw / 2.0,
                m = y(s.median)
            );
            for &o in &s.outliers {
                let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"none\" stroke=\"black\"/>", y(o));
            }
            let _ = writeln!(
                out,
                "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{} {} {}</text>",
                H - PAD / 2.0,
                r.sensor,
                r.metric,
                r.distance_cm
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn scatter_svg(rows: &[ScatterRow]) -> String {
    let mut out = svg_open("signal magnitude vs. C1 mean [cm]");
    let pts: Vec<(f64, f64, &ScatterRow)> =
        rows.iter().filter_map(|r| Some((r.magnitude?, r.c1_mean_cm?, r))).collect();
    if !pts.is_empty() {
        let (xlo, xhi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
        let (ylo, yhi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
        let xspan = if xhi > xlo { xhi - xlo } else { 1.0 };
        let y = y_scale(ylo, yhi);
        for (mx, c1, r) in pts {
            let x = PAD + (mx - xlo) / xspan * (W - 2.0 * PAD);
            let fill = if r.outside_fov { "none" } else { "#36c" };
            let _ = writeln!(
                out,
                "<circle cx=\"{x:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{fill}\" stroke=\"#36c\"><title>{} ({})</title></circle>",
                y(c1),
                r.object,
                r.material_class
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn barycentric_svg(rows: &[BaryRow]) -> String {
    let mut out = svg_open("barycentric weights");
    // One triangle per triple id, side by side.
    let n = rows.iter().map(|r| r.triple_id + 1).max().unwrap_or(0);
    let side = if n > 0 { ((W - PAD) / n as f64 - PAD).min(H - 3.0 * PAD) } else { 0.0 };
    for t in 0..n {
        let x0 = PAD + t as f64 * (side + PAD);
        let corners = [(x0, H - PAD), (x0 + side, H - PAD), (x0 + side / 2.0, H - PAD - side * 0.866)];
        let _ = writeln!(
            out,
            "<polygon points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" fill=\"none\" stroke=\"black\"/>",
            corners[0].0, corners[0].1, corners[1].0, corners[1].1, corners[2].0, corners[2].1
        );
        if let Some(r) = rows.iter().find(|r| r.triple_id == t) {
            for (c, label) in corners.iter().zip(&r.labels) {
                let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{label}</text>", c.0, c.1 + 12.0);
            }
        }
        for r in rows.iter().filter(|r| r.triple_id == t) {
            let px: f64 = corners.iter().zip(r.weights).map(|(c, w)| c.0 * w).sum();
            let py: f64 = corners.iter().zip(r.weights).map(|(c, w)| c.1 * w).sum();
            let _ = writeln!(
                out,
                "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2\" fill=\"#c33\"><title>{} {} {}</title></circle>",
                r.object, r.metric, r.distance_cm
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricStats;
    use crate::model::DistanceTag;

    fn report(object: &str, sensor: &str, d: DistanceTag, c1: f64) -> MetricReport {
        MetricReport {
            object: object.into(),
            sensor: sensor.into(),
            distance: d,
            erosion_k: 0,
            metrics: MetricKind::ALL
                .into_iter()
                .map(|m| MetricStats {
                    metric: m,
                    count: 1,
                    mean_cm: Some(c1),
                    std_cm: Some(0.0),
                    median_cm: Some(c1),
                })
                .collect(),
        }
    }

    #[test]
    fn singleton_boxplot() {
        let reports: Vec<_> = ["a", "b", "c", "d"]
            .iter()
            .map(|s| report("obj", s, DistanceTag::Cm30, 1.5))
            .collect();
        let t = build_plot_tables(&reports, &[], &PlotOptions::default());
        assert_eq!(t.boxplot.len(), 4 * 6);
        for r in &t.boxplot {
            assert_eq!(r.stats.n, 1);
            assert_eq!((r.stats.min, r.stats.median, r.stats.max), (1.5, 1.5, 1.5));
        }
    }

    #[test]
    fn four_sensors_give_four_triples() {
        let mut reports = Vec::new();
        for (i, s) in ["radar", "stereo", "tof", "lidar"].iter().enumerate() {
            reports.push(report("obj", s, DistanceTag::Cm40, 1.0 + i as f64));
        }
        let t = build_plot_tables(&reports, &[], &PlotOptions::default());
        for m in MetricKind::UNSIGNED {
            let ids: BTreeSet<_> = t.barycentric.iter().filter(|r| r.metric == m).map(|r| r.triple_id).collect();
            assert_eq!(ids.len(), 4);
        }
        assert!(t.barycentric.iter().all(|r| !r.metric.is_signed()));
        for r in &t.barycentric {
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn summary_matches_sort_oracle() {
        let v = [7.0, 1.0, 3.0, 100.0, 2.0, 5.0, 4.0, 6.0];
        let s = five_number_summary(&v).unwrap();
        let mut sorted = v.to_vec();
        sorted.sort_by(f64::total_cmp);
        // Type-7: h = (n-1)q
        assert_eq!(s.q1, 2.0 + 0.75 * (3.0 - 2.0));
        assert_eq!(s.median, 4.5);
        assert_eq!(s.q3, 6.0 + 0.25 * (7.0 - 6.0));
        assert_eq!(s.min, sorted[0]);
        assert_eq!(s.max, 100.0);
        assert_eq!(s.outliers, vec![100.0]);
        assert_eq!(s.whisker_hi, 7.0);
        assert_eq!(s.whisker_lo, 1.0);
        assert!(five_number_summary(&[]).is_err());
    }

    #[test]
    fn writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let reports = vec![
            report("cardboard", "radar", DistanceTag::Cm30, 0.4),
            report("cardboard", "stereo", DistanceTag::Cm30, 0.9),
            report("cardboard", "tof", DistanceTag::Cm30, 0.2),
        ];
        let objects = vec![ObjectAnalysis {
            object: "cardboard".into(),
            material_class: "fibers-and-stone".into(),
            outside_fov: false,
            magnitude: Some(2.5),
            incidence_median_deg: Some(10.0),
            rel_area: Some(0.3),
        }];
        let t = build_plot_tables(&reports, &objects, &PlotOptions::default());
        assert_eq!(t.scatter[0].c1_mean_cm, Some(0.4));
        write_plot_data(&t, dir.path()).unwrap();
        for f in ["boxplot.csv", "scatter.csv", "barycentric.csv", "boxplot.svg", "scatter.svg", "barycentric.svg"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let scatter = std::fs::read_to_string(dir.path().join("scatter.csv")).unwrap();
        assert!(scatter.contains("cardboard,fibers-and-stone,2.5,0.4,10,0.3,false"), "{scatter}");
    }
}
