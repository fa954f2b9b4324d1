//! Standalone SVG heatmap of an abstraction grid.
//!
//! Values are clamped to [0, 1] and coloured on a fixed linear ramp from
//! [`LOW_COLOR`] to [`HIGH_COLOR`]. Output is byte-identical for identical
//! input.

use std::fmt::Write as _;

use crate::abstraction::AbstractionGrid;

pub const LOW_COLOR: (u8, u8, u8) = (0xf7, 0xfb, 0xff);
pub const HIGH_COLOR: (u8, u8, u8) = (0x08, 0x30, 0x6b);

const CELL_H: usize = 36;
const MIN_CELL_W: usize = 56;
const CHAR_W: usize = 7;
const PAD: usize = 8;
const FONT: &str = "font-family=\"monospace\" font-size=\"12\"";

/// Ramp colour for `value`, clamped to [0, 1].
pub fn ramp(value: f64) -> (u8, u8, u8) {
    let t = if value.is_nan() { 0.0 } else { value.clamp(0.0, 1.0) };
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    (
        mix(LOW_COLOR.0, HIGH_COLOR.0),
        mix(LOW_COLOR.1, HIGH_COLOR.1),
        mix(LOW_COLOR.2, HIGH_COLOR.2),
    )
}

fn hex((r, g, b): (u8, u8, u8)) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Renders the grid with subject abstractions as rows and object
/// abstractions as columns, each cell annotated with its value to two
/// decimals.
pub fn render_svg(grid: &AbstractionGrid) -> String {
    let shape = grid.shape();
    let text_w = |s: &str| s.chars().count() * CHAR_W;
    let label_w = grid
        .subject_labels
        .iter()
        .map(|l| text_w(l))
        .chain([text_w(&grid.verb)])
        .max()
        .unwrap_or(0)
        + 2 * PAD;
    let cell_w = grid
        .object_labels
        .iter()
        .map(|l| text_w(l) + PAD)
        .max()
        .unwrap_or(0)
        .max(MIN_CELL_W);
    let header_h = CELL_H;
    let width = label_w + shape.cols * cell_w + PAD;
    let height = header_h + shape.rows * CELL_H + PAD;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(svg, "<title>{}</title>", escape(&grid.verb));
    let _ = writeln!(svg, "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" {FONT} font-style=\"italic\" text-anchor=\"end\">{}</text>",
        label_w - PAD,
        header_h / 2 + 4,
        escape(&grid.verb)
    );
    for (c, label) in grid.object_labels.iter().enumerate() {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" {FONT} text-anchor=\"middle\">{}</text>",
            label_w + c * cell_w + cell_w / 2,
            header_h / 2 + 4,
            escape(label)
        );
    }
    for (r, label) in grid.subject_labels.iter().enumerate() {
        let y = header_h + r * CELL_H;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" {FONT} text-anchor=\"end\">{}</text>",
            label_w - PAD,
            y + CELL_H / 2 + 4,
            escape(label)
        );
        for c in 0..shape.cols {
            let v = grid.get(r, c);
            let x = label_w + c * cell_w;
            let fill = ramp(v);
            let ink = if v.clamp(0.0, 1.0) > 0.5 { "#ffffff" } else { "#000000" };
            let _ = writeln!(
                svg,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell_w}\" height=\"{CELL_H}\" fill=\"{}\" stroke=\"#ffffff\"/>",
                hex(fill)
            );
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" {FONT} text-anchor=\"middle\" fill=\"{ink}\">{v:.2}</text>",
                x + cell_w / 2,
                y + CELL_H / 2 + 4
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
