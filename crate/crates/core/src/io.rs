//! Trajectory CSV and SVG output.
//!
//! CSV files carry the header `t,x1,x2,v1,v2,u,f2,du` and every value in
//! scientific notation with 17 significant digits, so they parse back to the
//! identical `f64`.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::trajectory::{Trajectory, TrajectoryRow, COLUMNS};

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv_to<W: Write>(traj: &Trajectory, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(COLUMNS)?;
    for r in traj.rows() {
        out.write_record([r.t, r.x1, r.x2, r.v1, r.v2, r.u, r.f2, r.du].map(format_value))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    write_csv_to(traj, BufWriter::new(File::create(path)?))
}

pub fn read_csv_from<R: Read>(reader: R) -> Result<Trajectory> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != COLUMNS {
        return Err(Error::Parse(format!(
            "unexpected CSV header `{}`, expected `{}`",
            header.join(","),
            COLUMNS.join(",")
        )));
    }
    let mut traj = Trajectory::default();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let mut vals = [0.0; 8];
        for (slot, field) in vals.iter_mut().zip(record.iter()) {
            *slot = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: invalid number `{field}`", i + 1)))?;
        }
        let [t, x1, x2, v1, v2, u, f2, du] = vals;
        traj.push(TrajectoryRow {
            t,
            x1,
            x2,
            v1,
            v2,
            u,
            f2,
            du,
        });
    }
    traj.validate()?;
    Ok(traj)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Trajectory> {
    read_csv_from(File::open(path)?)
}

const WIDTH: f64 = 900.0;
const PANEL_HEIGHT: f64 = 280.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const PANEL_GAP: f64 = 60.0;
const MAX_POINTS: usize = 3000;

struct Panel<'a> {
    title: &'a str,
    top: f64,
    series: Vec<(&'a str, &'a [f64], &'a str)>,
}

/// Two stacked panels: (a) positions `x₁`, `x₂` and (b) the control `u`, against time.
pub fn render_svg(traj: &Trajectory, title: &str) -> String {
    let height = MARGIN_TOP + 2.0 * PANEL_HEIGHT + PANEL_GAP + 40.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));

    let panels = [
        Panel {
            title: "(a) response",
            top: MARGIN_TOP,
            series: vec![("x1", &traj.x1, "#1f77b4"), ("x2", &traj.x2, "#d62728")],
        },
        Panel {
            title: "(b) control input u",
            top: MARGIN_TOP + PANEL_HEIGHT + PANEL_GAP,
            series: vec![("u", &traj.u, "#2ca02c")],
        },
    ];
    for panel in &panels {
        draw_panel(&mut s, &traj.t, panel);
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(traj: &Trajectory, path: impl AsRef<Path>, title: &str) -> Result<()> {
    std::fs::write(path, render_svg(traj, title))?;
    Ok(())
}

fn draw_panel(s: &mut String, t: &[f64], panel: &Panel<'_>) {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let (left, top) = (MARGIN_LEFT, panel.top);
    let (t0, t1) = match (t.first(), t.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a, a + 1.0),
        _ => (0.0, 1.0),
    };
    let (mut lo, mut hi) = panel
        .series
        .iter()
        .flat_map(|(_, ys, _)| ys.iter().copied())
        .filter(|y| y.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
    if !(hi > lo) {
        let c = if lo.is_finite() { lo } else { 0.0 };
        lo = c - 1.0;
        hi = c + 1.0;
    }
    let px = |tv: f64| left + (tv - t0) / (t1 - t0) * plot_w;
    let py = |yv: f64| top + (hi - yv) / (hi - lo) * PANEL_HEIGHT;

    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{plot_w}" height="{PANEL_HEIGHT}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, left + 5.0, top - 6.0, escape(panel.title));
    if lo < 0.0 && hi > 0.0 {
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{x2}" y2="{y:.2}" stroke="#bbb" stroke-dasharray="4 3"/>"##,
            y = py(0.0),
            x2 = left + plot_w
        );
    }
    for (frac, anchor) in [(0.0, "start"), (0.5, "middle"), (1.0, "end")] {
        let tv = t0 + frac * (t1 - t0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}">{}</text>"#,
            px(tv),
            top + PANEL_HEIGHT + 15.0,
            short(tv)
        );
    }
    for yv in [lo, hi] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 5.0,
            py(yv) + 4.0,
            short(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t</text>"#,
        left + plot_w / 2.0,
        top + PANEL_HEIGHT + 30.0
    );

    for (i, (name, ys, color)) in panel.series.iter().enumerate() {
        let mut points = String::new();
        for idx in decimate(ys, MAX_POINTS) {
            if ys[idx].is_finite() {
                let _ = write!(points, "{:.2},{:.2} ", px(t[idx]), py(ys[idx]));
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
            points.trim_end()
        );
        let lx = left + plot_w - 60.0;
        let ly = top + 15.0 + 15.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{name}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0
        );
    }
}

/// Indices keeping the min and max of each bucket so oscillation envelopes survive.
fn decimate(ys: &[f64], max_points: usize) -> Vec<usize> {
    if ys.len() <= max_points {
        return (0..ys.len()).collect();
    }
    let buckets = max_points / 2;
    let size = ys.len().div_ceil(buckets);
    let mut idx = Vec::with_capacity(2 * buckets + 1);
    for start in (0..ys.len()).step_by(size) {
        let end = (start + size).min(ys.len());
        let (mut imin, mut imax) = (start, start);
        for i in start..end {
            if ys[i] < ys[imin] {
                imin = i;
            }
            if ys[i] > ys[imax] {
                imax = i;
            }
        }
        idx.push(imin.min(imax));
        if imin != imax {
            idx.push(imin.max(imax));
        }
    }
    idx.push(ys.len() - 1);
    idx.dedup();
    idx
}

fn short(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small(n: usize) -> Trajectory {
        let mut tr = Trajectory::default();
        for k in 0..n {
            let t = k as f64 * 0.1;
            tr.push(TrajectoryRow {
                t,
                x1: t.cos(),
                x2: -0.1 * t,
                v1: -t.sin(),
                v2: -0.1,
                u: 0.025 + t * 1e-3,
                f2: 1.0 / 3.0,
                du: 1e-3,
            });
        }
        tr
    }

    #[test]
    fn csv_has_exact_header_and_one_line_per_sample() {
        let mut buf = Vec::new();
        write_csv_to(&small(4), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x1,x2,v1,v2,u,f2,du");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0.0000000000000000e0,1.0000000000000000e0,"));
    }

    #[test]
    fn csv_rejects_wrong_header() {
        let err = read_csv_from("a,b\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn svg_is_well_formed_with_two_panels() {
        let svg = render_svg(&small(50), "a < b & c");
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let polylines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
        assert_eq!(polylines, 3);
        let texts: Vec<&str> = doc.descendants().filter_map(|n| n.text()).collect();
        assert!(texts.contains(&"(a) response"));
        assert!(texts.contains(&"(b) control input u"));
    }

    #[test]
    fn decimation_keeps_extremes() {
        let ys: Vec<f64> = (0..100_000).map(|i| (i as f64 * 0.01).sin()).collect();
        let idx = decimate(&ys, 3000);
        assert!(idx.len() <= 3002);
        let kept_max = idx.iter().map(|&i| ys[i]).fold(f64::MIN, f64::max);
        assert_eq!(kept_max, ys.iter().copied().fold(f64::MIN, f64::max));
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 7 * 5)) {
            let mut tr = Trajectory::default();
            for (k, row) in values.chunks(7).enumerate() {
                tr.push(TrajectoryRow {
                    t: k as f64 * 0.37,
                    x1: row[0], x2: row[1], v1: row[2], v2: row[3], u: row[4], f2: row[5], du: row[6],
                });
            }
            let mut buf = Vec::new();
            write_csv_to(&tr, &mut buf).unwrap();
            let back = read_csv_from(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), tr.len());
            for (a, b) in back.rows().zip(tr.rows()) {
                for (x, y) in [a.t, a.x1, a.x2, a.v1, a.v2, a.u, a.f2, a.du].iter().zip([b.t, b.x1, b.x2, b.v1, b.v2, b.u, b.f2, b.du]) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}
