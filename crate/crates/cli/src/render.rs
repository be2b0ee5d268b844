//! Deterministic SVG rendering of loop files: one path per loop, larger
//! loops behind smaller ones, generations colored from a fixed palette.

use crate::io::LoopMeta;
use cle_core::geom::{Bbox, Loop};

const PALETTE: [&str; 6] = [
    "#1b6ca8", "#d1495b", "#3a7d44", "#8a5a44", "#6b5b95", "#c08c2c",
];

/// Render loops to an SVG document. Loops draw in descending area order so
/// nested loops stay visible; `class` attributes carry the generation and
/// tag so cluster dumps can distinguish outer from inner boundaries.
pub fn render_svg(loops: &[(Loop, LoopMeta)], stroke_width: f64) -> String {
    let mut bbox = Bbox::empty();
    for (lp, _) in loops {
        for &v in lp.vertices() {
            bbox.expand(v);
        }
    }
    if loops.is_empty() {
        bbox = Bbox {
            min: cle_core::geom::pt(0.0, 0.0),
            max: cle_core::geom::pt(1.0, 1.0),
        };
    }
    let pad = 0.03 * bbox.diag().max(1e-9);
    let bbox = bbox.pad(pad);

    let mut order: Vec<usize> = (0..loops.len()).collect();
    order.sort_by(|&a, &b| {
        loops[b]
            .0
            .signed_area()
            .abs()
            .total_cmp(&loops[a].0.signed_area().abs())
    });

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{:.6} {:.6} {:.6} {:.6}\">\n",
        bbox.min.x,
        bbox.min.y,
        bbox.width(),
        bbox.height()
    ));
    out.push_str("<g fill=\"none\">\n");
    for idx in order {
        let (lp, meta) = &loops[idx];
        let color = PALETTE[meta.generation as usize % PALETTE.len()];
        let mut d = String::new();
        for (k, v) in lp.vertices().iter().enumerate() {
            d.push_str(if k == 0 { "M" } else { "L" });
            d.push_str(&format!("{:.6} {:.6} ", v.x, v.y));
        }
        d.push('Z');
        out.push_str(&format!(
            "<path class=\"gen-{} {}\" stroke=\"{}\" stroke-width=\"{:.6}\" d=\"{}\"/>\n",
            meta.generation,
            if lp.is_simple_tagged() { "simple" } else { "raw" },
            color,
            stroke_width,
            d
        ));
    }
    out.push_str("</g>\n</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use cle_core::geom::{pt, Point};

    #[test]
    fn empty_input_is_a_valid_empty_canvas() {
        let svg = render_svg(&[], 0.01);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(!svg.contains("<path"));
    }

    #[test]
    fn concentric_circles_render_in_nesting_order() {
        let loops: Vec<(Loop, LoopMeta)> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&r| {
                (
                    Loop::circle(Point::ZERO, r, 64),
                    LoopMeta {
                        generation: 1,
                        parent: None,
                    },
                )
            })
            .collect();
        let svg = render_svg(&loops, 0.02);
        assert_eq!(svg.matches("<path").count(), 3);
        // the largest circle must be emitted first (drawn behind)
        let first_path = svg.find("<path").unwrap();
        let snippet = &svg[first_path..first_path + 200];
        assert!(snippet.contains("M4.000000"), "{snippet}");
        assert!(svg.contains("viewBox=\"-4.12"));
        let _ = pt(0.0, 0.0);
    }
}
