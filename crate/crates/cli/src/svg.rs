//! Minimal SVG charts for the plot subcommand.

use std::fmt::Write;

const W: f64 = 900.0;
const H: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 13] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
    "#1f77b4", "#8c564b", "#7f7f7f",
];

pub struct Series {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn plot_w() -> f64 {
    W - LEFT - RIGHT
}

fn plot_h() -> f64 {
    H - TOP - BOTTOM
}

fn frame(title: &str, x_labels: &[String], y_max: f64, y_unit: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" font-size="15" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let y = TOP + plot_h() * (1.0 - i as f64 / 4.0);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, LEFT + plot_w());
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}{}</text>"#, LEFT - 6.0, y + 4.0, trim(v), y_unit);
    }
    let n = x_labels.len().max(1);
    let step = (n as f64 / 12.0).ceil() as usize;
    for (i, label) in x_labels.iter().enumerate().step_by(step.max(1)) {
        let x = LEFT + plot_w() * (i as f64 + 0.5) / n as f64;
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="end" transform="rotate(-40 {x:.1} {:.1})">{}</text>"#,
            TOP + plot_h() + 14.0,
            TOP + plot_h() + 14.0,
            escape(label)
        );
    }
    s
}

fn trim(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn nice_max(max: f64) -> f64 {
    if max <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(max.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|&c| c >= max).unwrap_or(10.0 * mag)
}

fn legend(s: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 14.0 * i as f64;
        let x = W - RIGHT + 12.0;
        let _ = writeln!(s, r#"<rect x="{x}" y="{:.1}" width="10" height="10" fill="{}"/>"#, y, PALETTE[i % PALETTE.len()]);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}">{}</text>"#, x + 14.0, y + 9.0, escape(name));
    }
}

pub fn bar_chart(title: &str, x_labels: &[String], values: &[f64], y_unit: &str) -> String {
    let y_max = nice_max(values.iter().cloned().fold(0.0, f64::max));
    let mut s = frame(title, x_labels, y_max, y_unit);
    let n = values.len().max(1) as f64;
    let bw = plot_w() / n;
    for (i, v) in values.iter().enumerate() {
        let h = plot_h() * v / y_max;
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"/>"#,
            LEFT + bw * i as f64 + bw * 0.1,
            TOP + plot_h() - h,
            bw * 0.8,
            PALETTE[0]
        );
    }
    s + "</svg>\n"
}

pub fn line_chart(title: &str, x_labels: &[String], series: &[Series], y_unit: &str) -> String {
    let max = series.iter().flat_map(|s| s.values.iter().flatten()).cloned().fold(0.0, f64::max);
    let y_max = nice_max(max);
    let mut s = frame(title, x_labels, y_max, y_unit);
    let n = x_labels.len().max(1) as f64;
    for (k, ser) in series.iter().enumerate() {
        let mut d = String::new();
        let mut pen_down = false;
        for (i, v) in ser.values.iter().enumerate() {
            match v {
                Some(v) => {
                    let x = LEFT + plot_w() * (i as f64 + 0.5) / n;
                    let y = TOP + plot_h() * (1.0 - v / y_max);
                    let _ = write!(d, "{}{x:.1},{y:.1} ", if pen_down { "L" } else { "M" });
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.6"/>"#, d.trim_end(), PALETTE[k % PALETTE.len()]);
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut s, &names);
    s + "</svg>\n"
}

/// One group of bars per x label, one bar per series.
pub fn grouped_bars(title: &str, x_labels: &[String], series: &[Series], y_unit: &str) -> String {
    let max = series.iter().flat_map(|s| s.values.iter().flatten()).cloned().fold(0.0, f64::max);
    let y_max = nice_max(max);
    let mut s = frame(title, x_labels, y_max, y_unit);
    let n = x_labels.len().max(1) as f64;
    let gw = plot_w() / n;
    let bw = gw * 0.8 / series.len().max(1) as f64;
    for (k, ser) in series.iter().enumerate() {
        for (i, v) in ser.values.iter().enumerate() {
            let Some(v) = v else { continue };
            let h = plot_h() * v / y_max;
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{bw:.1}" height="{h:.1}" fill="{}"/>"#,
                LEFT + gw * i as f64 + gw * 0.1 + bw * k as f64,
                TOP + plot_h() - h,
                PALETTE[k % PALETTE.len()]
            );
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut s, &names);
    s + "</svg>\n"
}
