//! Static SVG chart of baseline vs counterfactual infected counts.

use std::fmt::Write as _;

use crate::observables::Trajectory;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn polyline(days: &[(u32, u32)], x: impl Fn(f64) -> f64, y: impl Fn(f64) -> f64) -> String {
    days.iter()
        .map(|&(d, i)| format!("{},{}", fmt(x(f64::from(d))), fmt(y(f64::from(i)))))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Two infected-count polylines with a dotted vertical rule at
/// `intervention_day`. Output depends only on the inputs.
pub fn counterfactual_svg(baseline: &Trajectory, counterfactual: &Trajectory, intervention_day: u32, title: &str) -> String {
    let pts = |t: &Trajectory| t.records.iter().map(|r| (r.day, r.i)).collect::<Vec<_>>();
    let (b, c) = (pts(baseline), pts(counterfactual));
    let max_day = b
        .iter()
        .chain(&c)
        .map(|p| p.0)
        .max()
        .unwrap_or(0)
        .max(intervention_day)
        .max(1);
    let max_i = b.iter().chain(&c).map(|p| p.1).max().unwrap_or(0).max(1);

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let x = |d: f64| LEFT + pw * d / f64::from(max_day);
    let y = |i: f64| TOP + ph * (1.0 - i / f64::from(max_i));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, fmt(WIDTH / 2.0), escape(title));
    // axes
    let _ = writeln!(
        s,
        r#"<path d="M{l},{t} V{b} H{r}" fill="none" stroke="black"/>"#,
        l = fmt(LEFT),
        t = fmt(TOP),
        b = fmt(TOP + ph),
        r = fmt(LEFT + pw)
    );
    for k in 0..=4u32 {
        let d = f64::from(max_day) * f64::from(k) / 4.0;
        let i = f64::from(max_i) * f64::from(k) / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            fmt(x(d)),
            fmt(TOP + ph + 16.0),
            d.round()
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            fmt(LEFT - 6.0),
            fmt(y(i) + 4.0),
            i.round()
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">day</text>"#,
        fmt(LEFT + pw / 2.0),
        fmt(HEIGHT - 12.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">infected agents</text>"#,
        fmt(TOP + ph / 2.0),
        fmt(TOP + ph / 2.0)
    );
    let _ = writeln!(
        s,
        r#"<line class="intervention-day" x1="{xd}" y1="{t}" x2="{xd}" y2="{b}" stroke="gray" stroke-dasharray="2 4"/>"#,
        xd = fmt(x(f64::from(intervention_day))),
        t = fmt(TOP),
        b = fmt(TOP + ph)
    );
    let _ = writeln!(
        s,
        r#"<polyline class="baseline" points="{}" fill="none" stroke="firebrick" stroke-width="2"/>"#,
        polyline(&b, x, y)
    );
    let _ = writeln!(
        s,
        r#"<polyline class="counterfactual" points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        polyline(&c, x, y)
    );
    let lx = LEFT + pw - 150.0;
    let _ = writeln!(s, r#"<line x1="{}" y1="{t}" x2="{}" y2="{t}" stroke="firebrick" stroke-width="2"/>"#, fmt(lx), fmt(lx + 20.0), t = fmt(TOP + 8.0));
    let _ = writeln!(s, r#"<text x="{}" y="{}">baseline</text>"#, fmt(lx + 26.0), fmt(TOP + 12.0));
    let _ = writeln!(s, r#"<line x1="{}" y1="{t}" x2="{}" y2="{t}" stroke="steelblue" stroke-width="2"/>"#, fmt(lx), fmt(lx + 20.0), t = fmt(TOP + 26.0));
    let _ = writeln!(s, r#"<text x="{}" y="{}">counterfactual</text>"#, fmt(lx + 26.0), fmt(TOP + 30.0));
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
