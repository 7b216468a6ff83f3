//! F1-versus-shots curves as CSV and SVG. Shots sit on an ordinal axis.

use std::fmt::Write as _;

use relbridge_core::experiment::Aggregate;
use relbridge_core::regimes::Regime;
use relbridge_core::Design;

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;

fn color(d: Design) -> &'static str {
    match d {
        Design::Vanilla => "#1f77b4",
        Design::Implicit => "#d62728",
        Design::Explicit => "#2ca02c",
    }
}

pub fn curves(agg: &Aggregate, regime: Regime, mlm: bool) -> Vec<(Design, Vec<(usize, f64)>)> {
    agg.designs.iter().map(|&d| (d, agg.series(regime, mlm, d))).collect()
}

pub fn to_csv(curves: &[(Design, Vec<(usize, f64)>)], config_hash: &str) -> String {
    let mut s = format!("# config_hash: {config_hash}\ndesign,shots,f1\n");
    for (d, pts) in curves {
        for (k, f1) in pts {
            let _ = writeln!(s, "{d},{k},{f1:.6}");
        }
    }
    s
}

pub fn to_svg(curves: &[(Design, Vec<(usize, f64)>)], title: &str, config_hash: &str) -> String {
    let mut shots: Vec<usize> = curves.iter().flat_map(|(_, p)| p.iter().map(|(k, _)| *k)).collect();
    shots.sort_unstable();
    shots.dedup();
    let n = shots.len().max(2) as f64;
    let x = |k: usize| {
        let i = shots.iter().position(|s| *s == k).unwrap_or(0) as f64;
        PAD + i * (W - 2.0 * PAD) / (n - 1.0)
    };
    let y = |f1: f64| H - PAD - f1.clamp(0.0, 1.0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, "<!-- config_hash: {config_hash} -->");
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        s,
        r#"<path d="M{PAD},{PAD} V{} H{}" stroke="black" fill="none"/>"#,
        H - PAD,
        W - PAD
    );
    for t in 0..=5 {
        let v = t as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#, PAD - 6.0, y(v) + 4.0);
        let _ = writeln!(s, r##"<line x1="{PAD}" x2="{}" y1="{yy}" y2="{yy}" stroke="#ddd"/>"##, W - PAD, yy = y(v));
    }
    for &k in &shots {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{k}</text>"#, x(k), H - PAD + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">shots</text>"#, W / 2.0, H - 10.0);
    let _ = writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">micro F1</text>"#, H / 2.0, H / 2.0);
    for (i, (d, pts)) in curves.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let path: Vec<String> = pts.iter().map(|&(k, f1)| format!("{:.1},{:.1}", x(k), y(f1))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{}" stroke-width="2" fill="none"/>"#, path.join(" "), color(*d));
        for &(k, f1) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{}"/>"#, x(k), y(f1), color(*d));
        }
        let ly = PAD + 14.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{}">{d}</text>"#, W - PAD - 60.0, color(*d));
    }
    s.push_str("</svg>\n");
    s
}
