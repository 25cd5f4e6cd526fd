//! Cluster outlines: each particle is drawn as the image of its slit under
//! the map that preceded it.

use super::{BaseMap, ChainEvent, ConformalChain};
use crate::angle::unit;
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolylinePoint {
    pub event_index: usize,
    pub t: f64,
    pub re: f64,
    pub im: f64,
}

/// One particle's curve. `event_index` counts events from 1; needles of a
/// symmetric base map carry index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub event_index: usize,
    pub points: Vec<PolylinePoint>,
}

pub fn trace_cluster(chain: &ConformalChain, points_per_particle: usize) -> Result<Vec<Polyline>> {
    if points_per_particle < 2 {
        return Err(Error::domain("need at least two points per particle"));
    }
    let ts: Vec<f64> = (0..points_per_particle).map(|i| i as f64 / (points_per_particle - 1) as f64).collect();
    let mut out = Vec::new();
    if let BaseMap::Symmetric(root) = &chain.initial().base {
        let len = root.tip_radius() - 1.0;
        for a in root.tip_angles() {
            let points = ts
                .iter()
                .map(|&t| {
                    let w = unit(a) * (1.0 + t * len);
                    PolylinePoint { event_index: 0, t, re: w.re, im: w.im }
                })
                .collect();
            out.push(Polyline { event_index: 0, points });
        }
    }
    let events = chain.events();
    let traced: Vec<Vec<Polyline>> = events
        .par_iter()
        .enumerate()
        .map(|(m, e)| {
            let (angles, d) = match e {
                ChainEvent::Slit(s) => (vec![s.angle()], s.geometry().length()),
                ChainEvent::Fold(f) => (f.tip_angles(), f.tip_radius() - 1.0),
            };
            angles
                .into_iter()
                .map(|a| {
                    let dir = unit(a);
                    let points = ts
                        .iter()
                        .map(|&t| {
                            let w = chain.evaluate_upto_unchecked(m, dir * (1.0 + t * d));
                            PolylinePoint { event_index: m + 1, t, re: w.re, im: w.im }
                        })
                        .collect();
                    Polyline { event_index: m + 1, points }
                })
                .collect()
        })
        .collect();
    out.extend(traced.into_iter().flatten());
    Ok(out)
}

pub fn write_polylines_csv<W: Write>(polylines: &[Polyline], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in polylines {
        for pt in &p.points {
            w.serialize(pt)?;
        }
    }
    if polylines.is_empty() {
        w.write_record(["event_index", "t", "re", "im"])?;
    }
    w.flush()?;
    Ok(())
}

/// Renders polylines as an SVG document with the unit circle for reference.
/// Later particles are drawn in a darker shade.
pub fn render_svg(polylines: &[Polyline], size_px: u32) -> String {
    let extent = polylines
        .iter()
        .flat_map(|p| &p.points)
        .map(|p| p.re.abs().max(p.im.abs()))
        .fold(1.0_f64, f64::max)
        * 1.05;
    let last = polylines.iter().map(|p| p.event_index).max().unwrap_or(0).max(1);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size_px}" height="{size_px}" viewBox="{} {} {} {}">"#,
        -extent,
        -extent,
        2.0 * extent,
        2.0 * extent
    );
    let stroke = 2.0 * extent / size_px as f64;
    let _ = writeln!(s, r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#ffffff"/>"##, -extent, -extent, 2.0 * extent, 2.0 * extent);
    let _ = writeln!(s, r##"<circle cx="0" cy="0" r="1" fill="#dddddd" stroke="#888888" stroke-width="{stroke}"/>"##);
    let _ = writeln!(s, r#"<g fill="none" stroke-width="{stroke}" stroke-linecap="round">"#);
    for p in polylines {
        if p.points.is_empty() {
            continue;
        }
        let shade = 200 - (160 * p.event_index / last) as u32;
        let mut d = String::new();
        for (i, pt) in p.points.iter().enumerate() {
            // SVG's y axis points down
            let _ = write!(d, "{}{:.6},{:.6} ", if i == 0 { 'M' } else { 'L' }, pt.re, -pt.im);
        }
        let _ = writeln!(s, r#"<path d="{}" stroke="rgb({shade},{shade},{})"/>"#, d.trim_end(), 255 - shade / 2);
    }
    s.push_str("</g>\n</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slit::RotatedSlit;

    #[test]
    fn empty_chain_traces_nothing() {
        assert!(trace_cluster(&ConformalChain::identity(), 5).unwrap().is_empty());
    }

    #[test]
    fn single_event_is_a_segment() {
        let mut c = ConformalChain::identity();
        c.push(RotatedSlit::with_capacity(0.04, 0.0).unwrap());
        let d = c.events()[0].as_slit().unwrap().geometry().length();
        let lines = trace_cluster(&c, 11).unwrap();
        assert_eq!(lines.len(), 1);
        for p in &lines[0].points {
            assert!(p.im.abs() < 1e-12);
            assert!((p.re - (1.0 + p.t * d)).abs() < 1e-12);
        }
        let svg = render_svg(&lines, 200);
        assert!(svg.starts_with("<svg") && svg.contains("<path"));
    }
}
