//! Minimal SVG line plots, one panel per coordinate.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::integrate::{RadiusProfile, Trajectory};

const WIDTH: f64 = 720.0;
const PANEL: f64 = 160.0;
const PAD: f64 = 40.0;
const MAX_POINTS: usize = 2000;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series<'a> {
    pub label: &'a str,
    pub trajectory: &'a Trajectory,
}

/// Band `z_i(t) +- r(t)` drawn under the series.
pub struct Tube<'a> {
    pub center: &'a Trajectory,
    pub radius: &'a RadiusProfile,
}

fn stride(n: usize) -> usize {
    n.div_ceil(MAX_POINTS).max(1)
}

fn sampled(n: usize) -> impl Iterator<Item = usize> {
    let s = stride(n);
    (0..n).step_by(s).chain((!(n - 1).is_multiple_of(s)).then_some(n - 1))
}

pub fn render(series: &[Series<'_>], tube: Option<&Tube<'_>>) -> Result<String> {
    let first = series.first().ok_or_else(|| Error::InvalidInput("nothing to plot".into()))?;
    let dim = first.trajectory.dim();
    if series.iter().any(|s| s.trajectory.dim() != dim) || tube.is_some_and(|t| t.center.dim() != dim) {
        return Err(Error::InvalidInput("plotted trajectories differ in dimension".into()));
    }
    let mut t0 = f64::INFINITY;
    let mut t1 = f64::NEG_INFINITY;
    for s in series {
        t0 = t0.min(s.trajectory.t0());
        t1 = t1.max(s.trajectory.t_end());
    }
    if !(t1 > t0) {
        t1 = t0 + 1.0;
    }
    let height = PAD + dim as f64 * (PANEL + PAD);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let x_of = |t: f64| PAD + (t - t0) / (t1 - t0) * (WIDTH - 2.0 * PAD);

    for i in 0..dim {
        let top = PAD + i as f64 * (PANEL + PAD);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in series {
            for p in s.trajectory.states() {
                lo = lo.min(p.coords()[i]);
                hi = hi.max(p.coords()[i]);
            }
        }
        if let Some(tb) = tube {
            for (t, p) in tb.center.times().iter().zip(tb.center.states()) {
                let r = tb.radius.eval(*t);
                lo = lo.min(p.coords()[i] - r);
                hi = hi.max(p.coords()[i] + r);
            }
        }
        if !(hi > lo) {
            lo -= 1.0;
            hi += 1.0;
        }
        let y_of = |v: f64| top + PANEL - (v - lo) / (hi - lo) * PANEL;
        let _ = writeln!(
            out,
            r##"<rect x="{PAD}" y="{top}" width="{}" height="{PANEL}" fill="none" stroke="#999"/>"##,
            WIDTH - 2.0 * PAD
        );
        let _ = writeln!(out, r#"<text x="4" y="{:.2}">x{}</text>"#, top + PANEL / 2.0, i + 1);
        let _ = writeln!(out, r#"<text x="{PAD}" y="{:.2}">{hi:.4e}</text>"#, top - 4.0);
        let _ = writeln!(out, r#"<text x="{PAD}" y="{:.2}">{lo:.4e}</text>"#, top + PANEL + 12.0);

        if let Some(tb) = tube {
            let c = tb.center;
            let idx: Vec<usize> = sampled(c.len()).collect();
            let mut pts = String::new();
            for &k in &idx {
                let t = c.times()[k];
                let _ = write!(pts, "{:.2},{:.2} ", x_of(t), y_of(c.states()[k].coords()[i] + tb.radius.eval(t)));
            }
            for &k in idx.iter().rev() {
                let t = c.times()[k];
                let _ = write!(pts, "{:.2},{:.2} ", x_of(t), y_of(c.states()[k].coords()[i] - tb.radius.eval(t)));
            }
            let _ = writeln!(out, r##"<polygon points="{}" fill="#cccccc" fill-opacity="0.5" stroke="none"/>"##, pts.trim_end());
        }
        for (j, s) in series.iter().enumerate() {
            let x = s.trajectory;
            let mut pts = String::new();
            for k in sampled(x.len()) {
                let _ = write!(pts, "{:.2},{:.2} ", x_of(x.times()[k]), y_of(x.states()[k].coords()[i]));
            }
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#,
                pts.trim_end(),
                COLORS[j % COLORS.len()]
            );
        }
    }
    for (j, s) in series.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="16" fill="{}">{}</text>"#,
            PAD + 120.0 * j as f64,
            COLORS[j % COLORS.len()],
            escape(s.label)
        );
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">t in [{t0}, {t1}]</text>"#, WIDTH - PAD - 140.0, height - 8.0);
    out.push_str("</svg>\n");
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::TimeGrid;
    use crate::setgeom::Point;

    #[test]
    fn renders_and_is_deterministic() {
        let g = TimeGrid::uniform(0.0, 1.0, 0.001).unwrap();
        let x = Trajectory::constant(&g, &Point::new(vec![1.0, -2.0]).unwrap());
        let r = RadiusProfile::constant(0.5).unwrap();
        let s = [Series { label: "x", trajectory: &x }];
        let tube = Tube { center: &x, radius: &r };
        let a = render(&s, Some(&tube)).unwrap();
        assert_eq!(a, render(&s, Some(&tube)).unwrap());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert_eq!(a.matches("<polyline").count(), 2);
        assert!(render(&[], None).is_err());
    }

    #[test]
    fn sampling_keeps_ends() {
        let v: Vec<usize> = sampled(4501).collect();
        assert_eq!(v[0], 0);
        assert_eq!(*v.last().unwrap(), 4500);
        assert!(v.len() <= MAX_POINTS + 1);
        let w: Vec<usize> = sampled(5).collect();
        assert_eq!(w, vec![0, 1, 2, 3, 4]);
    }
}
