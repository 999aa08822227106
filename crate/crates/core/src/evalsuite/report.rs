//! JSON, CSV and SVG output for evaluation results.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::AblationTable;

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    std::fs::write(path, text + "\n")
}

/// Writes any sequence of flat serializable records as CSV with a header row.
pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io::Error::other)?;
    for r in rows {
        w.serialize(r).map_err(io::Error::other)?;
    }
    w.flush()
}

pub fn write_table(dir: impl AsRef<Path>, stem: &str, table: &AblationTable) -> io::Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_json(dir.join(format!("{stem}.json")), table)?;
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv"))).map_err(io::Error::other)?;
    w.write_record(["config", "k", "order", "ppl", "n_tokens", "final_train_loss", "seed"])
        .map_err(io::Error::other)?;
    let opt = |x: Option<String>| x.unwrap_or_default();
    for r in &table.rows {
        w.write_record([
            r.config.clone(),
            opt(r.k.map(|k| k.to_string())),
            opt(r.order.clone()),
            format!("{:.6}", r.ppl),
            r.n_tokens.to_string(),
            opt(r.final_train_loss.map(|l| format!("{l:.6}"))),
            opt(r.seed.map(|s| s.to_string())),
        ])
        .map_err(io::Error::other)?;
    }
    w.flush()
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    let _ = write!(
        out,
        r#"<line x1="{PAD}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{y}" stroke="black"/>"#,
        y = H - PAD,
        x2 = W - PAD / 2.0
    );
}

fn y_axis(out: &mut String, lo: f64, hi: f64, label: &str) -> impl Fn(f64) -> f64 {
    let span = (hi - lo).max(1e-12);
    let plot_h = H - 2.0 * PAD;
    for i in 0..=4 {
        let v = lo + span * i as f64 / 4.0;
        let y = H - PAD - plot_h * i as f64 / 4.0;
        let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="end">{:.2}</text>"#, PAD - 6.0, y + 4.0, v);
        let _ = write!(out, r##"<line x1="{PAD}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/>"##, W - PAD / 2.0);
    }
    let _ = write!(
        out,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(label)
    );
    move |v: f64| H - PAD - plot_h * (v - lo) / span
}

/// Vertical bar chart, one bar per label.
pub fn bar_chart_svg(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let hi = bars.iter().map(|b| b.1).fold(0.0, f64::max) * 1.1;
    let y = y_axis(&mut out, 0.0, if hi > 0.0 { hi } else { 1.0 }, y_label);
    let plot_w = W - 1.5 * PAD;
    let slot = plot_w / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = PAD + slot * i as f64 + slot * 0.15;
        let top = y(*v);
        let _ = write!(
            out,
            r##"<rect x="{x:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="#4a7ab5"/>"##,
            slot * 0.7,
            (H - PAD - top).max(0.0)
        );
        let cx = x + slot * 0.35;
        let _ = write!(out, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{v:.2}</text>"#, top - 4.0);
        let _ = write!(out, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, H - PAD + 16.0, escape(label));
    }
    out.push_str("</svg>\n");
    out
}

/// Line chart with a logarithmic x axis (e.g. perplexity against parameter count).
pub fn log_line_chart_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let finite: Vec<(f64, f64)> = points.iter().copied().filter(|(x, y)| *x > 0.0 && y.is_finite()).collect();
    let (ylo, yhi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (ylo, yhi) = if finite.is_empty() { (0.0, 1.0) } else { (ylo * 0.95, yhi * 1.05) };
    let y = y_axis(&mut out, ylo, yhi, y_label);
    let (xlo, xhi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0.log10()), b.max(p.0.log10())));
    let xspan = if finite.len() > 1 { (xhi - xlo).max(1e-12) } else { 1.0 };
    let plot_w = W - 1.5 * PAD - 20.0;
    let x = |v: f64| PAD + 10.0 + plot_w * (v.log10() - xlo) / xspan;
    let path: Vec<String> = finite.iter().map(|p| format!("{:.1},{:.1}", x(p.0), y(p.1))).collect();
    let _ = write!(out, r##"<polyline points="{}" fill="none" stroke="#b5534a" stroke-width="2"/>"##, path.join(" "));
    for p in &finite {
        let _ = write!(out, r##"<circle cx="{:.1}" cy="{:.1}" r="4" fill="#b5534a"/>"##, x(p.0), y(p.1));
        let _ = write!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3e}</text>"#, x(p.0), H - PAD + 16.0, p.0);
    }
    let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 14.0, escape(x_label));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_well_formed_enough() {
        let s = bar_chart_svg("PPL <ablation>", "ppl", &[("text-only".into(), 12.0), ("ne".into(), 7.5)]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("&lt;ablation&gt;"));
        assert_eq!(s.matches("<rect").count(), 3);
        let l = log_line_chart_svg("scale", "params", "ppl", &[(1e5, 20.0), (1e6, 15.0), (1e7, 11.0)]);
        assert_eq!(l.matches("<circle").count(), 3);
    }
}
