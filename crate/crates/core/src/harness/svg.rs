//! Static trajectory renders. Output depends only on the log, so repeated
//! renders are byte-identical.

use std::fmt::Write as _;
use std::str::FromStr;

use super::{HarnessError, TrajectoryLog};

const WIDTH: f64 = 800.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// x-y plane seen from above.
    Top,
    /// Isometric view with z up.
    Iso,
}

impl FromStr for Projection {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "top" => Ok(Projection::Top),
            "iso" => Ok(Projection::Iso),
            _ => Err(HarnessError::Config(format!("unknown projection '{s}' (expected top or iso)"))),
        }
    }
}

impl Projection {
    fn project(self, p: [f64; 3]) -> (f64, f64) {
        match self {
            Projection::Top => (p[0], -p[1]),
            Projection::Iso => {
                let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
                ((p[0] - p[1]) * c, (p[0] + p[1]) * s - p[2])
            }
        }
    }
}

struct Frame {
    proj: Projection,
    min: (f64, f64),
    scale: f64,
    height: f64,
}

impl Frame {
    fn new(proj: Projection, lo: [f64; 3], hi: [f64; 3]) -> Self {
        let mut min = (f64::INFINITY, f64::INFINITY);
        let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for corner in 0..8 {
            let pick = |axis: usize| if corner >> axis & 1 == 1 { hi[axis] } else { lo[axis] };
            let (u, v) = proj.project([pick(0), pick(1), pick(2)]);
            min = (min.0.min(u), min.1.min(v));
            max = (max.0.max(u), max.1.max(v));
        }
        let span = (max.0 - min.0).max(1e-9);
        let scale = (WIDTH - 2.0 * MARGIN) / span;
        Self {
            proj,
            min,
            scale,
            height: (max.1 - min.1) * scale + 2.0 * MARGIN,
        }
    }

    fn map(&self, p: [f64; 3]) -> (f64, f64) {
        let (u, v) = self.proj.project(p);
        (MARGIN + (u - self.min.0) * self.scale, MARGIN + (v - self.min.1) * self.scale)
    }
}

/// SVG document with one polyline per UAV, hazard circles per regeneration
/// epoch, and start/target markers.
pub fn render_trajectory_svg(log: &TrajectoryLog, projection: Projection) -> Result<String, HarnessError> {
    if log.is_empty() {
        return Err(HarnessError::EmptyLog);
    }
    let f = Frame::new(projection, log.arena_min, log.arena_max);
    let mut s = String::new();
    // fmt::Write on String cannot fail
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{:.0}" viewBox="0 0 {WIDTH:.0} {:.0}">"#,
        f.height, f.height
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>"##);
    let epochs = log.hazards.len().max(1) as f64;
    for (e, epoch) in log.hazards.iter().enumerate() {
        let opacity = 0.15 + 0.35 * (e as f64 + 1.0) / epochs;
        let _ = writeln!(s, r#"<g class="hazards" data-epoch="{e}" data-t="{}">"#, epoch.t);
        for (c, r) in epoch.centers.iter().zip(&epoch.radii) {
            let (x, y) = f.map(*c);
            let _ = writeln!(
                s,
                r##"<circle class="hazard" cx="{x:.3}" cy="{y:.3}" r="{:.3}" fill="#7f7f7f" fill-opacity="{opacity:.3}"/>"##,
                r * f.scale
            );
        }
        let _ = writeln!(s, "</g>");
    }
    for (i, track) in log.positions.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = track
            .iter()
            .map(|p| {
                let (x, y) = f.map(*p);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="uav" data-uav="{i}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
    }
    for (i, (a, b)) in log.starts.iter().zip(&log.targets).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let (x, y) = f.map(*a);
        let _ = writeln!(
            s,
            r#"<rect class="start" data-uav="{i}" x="{:.3}" y="{:.3}" width="8" height="8" fill="{color}"/>"#,
            x - 4.0,
            y - 4.0
        );
        let (x, y) = f.map(*b);
        let _ = writeln!(
            s,
            r#"<circle class="target" data-uav="{i}" cx="{x:.3}" cy="{y:.3}" r="5" fill="none" stroke="{color}" stroke-width="2"/>"#
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
