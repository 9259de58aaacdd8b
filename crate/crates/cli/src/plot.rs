//! Minimal SVG line charts for the BLER and identification CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

struct Chart {
    title: &'static str,
    x_label: &'static str,
    y_label: &'static str,
    log_y: bool,
    series: Vec<Series>,
}

/// Picks the chart type from the CSV header.
pub fn render(csv_text: &str) -> Result<String, String> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| format!("missing column {name:?}"));
    let records: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let num = |r: &csv::StringRecord, i: usize| -> Result<f64, String> {
        r[i].parse::<f64>().map_err(|e| format!("bad number {:?}: {e}", &r[i]))
    };

    let chart = if headers.iter().any(|h| h == "bler") {
        let (d, x, y) = (col("decoder")?, col("ebn0_db")?, col("bler")?);
        let mut by_decoder: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for r in &records {
            let bler = num(r, y)?;
            if bler > 0.0 {
                by_decoder.entry(r[d].to_string()).or_default().push((num(r, x)?, bler));
            }
        }
        Chart {
            title: "Block error rate",
            x_label: "Eb/N0 (dB)",
            y_label: "BLER",
            log_y: true,
            series: by_decoder.into_iter().map(|(name, points)| Series { name, points }).collect(),
        }
    } else if headers.iter().any(|h| h == "attempt") {
        let (x, y) = (col("attempt")?, col("rate")?);
        let mut series = vec![Series {
            name: "per attempt".into(),
            points: records.iter().map(|r| Ok((num(r, x)?, num(r, y)?))).collect::<Result<_, String>>()?,
        }];
        if let Ok(c) = col("cumulative_rate") {
            series.push(Series {
                name: "cumulative".into(),
                points: records.iter().map(|r| Ok((num(r, x)?, num(r, c)?))).collect::<Result<_, String>>()?,
            });
        }
        Chart { title: "First-error identification", x_label: "attempt", y_label: "rate", log_y: false, series }
    } else {
        return Err("unrecognized CSV: expected a BLER or identification header".into());
    };
    if chart.series.iter().all(|s| s.points.is_empty()) {
        return Err("nothing to plot".into());
    }
    Ok(draw(&chart))
}

fn draw(chart: &Chart) -> String {
    let ty = |v: f64| if chart.log_y { v.log10() } else { v };
    let all = chart.series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(ty(y));
        y1 = y1.max(ty(y));
    }
    if chart.log_y {
        y0 = y0.floor();
        y1 = y1.ceil().max(y0 + 1.0);
    } else {
        y0 = 0.0;
        y1 = y1.max(1e-9) * 1.1;
    }
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (ty(y) - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, chart.title);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#, right - left, bottom - top);

    // Ticks.
    for i in 0..=5 {
        let x = x0 + (x1 - x0) * i as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, px(x), bottom + 16.0, trim(x));
    }
    if chart.log_y {
        for e in y0 as i32..=y1 as i32 {
            let y = bottom - (e as f64 - y0) / (y1 - y0) * (bottom - top);
            let _ = writeln!(s, r##"<line x1="{left}" x2="{right}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/>"##);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{e}</text>"#, left - 6.0, y + 4.0);
        }
    } else {
        for i in 0..=5 {
            let v = y0 + (y1 - y0) * i as f64 / 5.0;
            let y = py(v);
            let _ = writeln!(s, r##"<line x1="{left}" x2="{right}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/>"##);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, y + 4.0, trim(v));
        }
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 18.0, chart.x_label);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        chart.y_label
    );

    for (i, series) in chart.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = series.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        for &(x, y) in &series.points {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = top + 16.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, right - 150.0, right - 126.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, right - 120.0, ly + 4.0, escape(&series.name));
    }
    s.push_str("</svg>\n");
    s
}

fn trim(v: f64) -> String {
    let t = format!("{v:.2}");
    t.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_both_kinds() {
        let bler = "decoder,n,k,ebn0_db,trials,block_errors,bler\nSC,64,32,1,100,30,3e-1\nSC,64,32,2,100,5,5e-2\n";
        assert!(render(bler).unwrap().contains("<polyline"));
        let ident = "attempt,successes,failures_total,rate,cumulative_rate\n1,50,100,0.5,0.5\n2,20,100,0.2,0.7\n";
        assert!(render(ident).unwrap().contains("cumulative"));
        assert!(render("a,b\n1,2\n").is_err());
    }
}
