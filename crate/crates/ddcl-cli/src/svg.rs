//! Minimal SVG line charts for the experiment outputs. Plots are a
//! convenience; every number they show is also in the CSVs.

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const COLORS: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool) -> String {
    let (w, h) = (720.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 160.0, 40.0, 50.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let tx = |x: f64| if log_x { x.max(1e-300).log10() } else { x };
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            xmin = xmin.min(tx(x));
            xmax = xmax.max(tx(x));
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() {
        xmin = 0.0;
        xmax = 1.0;
    }
    if !ymin.is_finite() {
        ymin = 0.0;
        ymax = 1.0;
    }
    if (xmax - xmin).abs() < 1e-12 {
        xmax = xmin + 1.0;
    }
    if (ymax - ymin).abs() < 1e-12 {
        ymax = ymin + 1.0;
    }
    let pad = 0.05 * (ymax - ymin);
    let (ymin, ymax) = (ymin - pad, ymax + pad);
    let px = |x: f64| ml + (tx(x) - xmin) / (xmax - xmin) * pw;
    let py = |y: f64| mt + ph - (y - ymin) / (ymax - ymin) * ph;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        ml + pw / 2.0,
        xml_escape(title)
    ));
    // axes
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + ph,
        ml + pw,
        mt + ph,
        mt + ph
    ));
    // ticks
    for i in 0..=4 {
        let fx = xmin + (xmax - xmin) * i as f64 / 4.0;
        let x = ml + pw * i as f64 / 4.0;
        let label = if log_x {
            format!("{:.3}", 10f64.powf(fx))
        } else {
            format!("{fx:.3}")
        };
        out.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{label}</text>\n",
            mt + ph,
            mt + ph + 5.0,
            mt + ph + 20.0
        ));
        let fy = ymin + (ymax - ymin) * i as f64 / 4.0;
        let y = mt + ph - ph * i as f64 / 4.0;
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{ml}\" y2=\"{y}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{fy:.3}</text>\n",
            ml - 5.0,
            ml - 8.0,
            y + 4.0
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        ml + pw / 2.0,
        h - 12.0,
        xml_escape(x_label),
        mt + ph / 2.0,
        mt + ph / 2.0,
        xml_escape(y_label)
    ));
    // series
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| tx(*x).is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        if pts.len() > 1 {
            out.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\" points=\"{}\"/>\n",
                pts.join(" ")
            ));
        } else if pts.len() == 1 {
            let xy: Vec<&str> = pts[0].split(',').collect();
            out.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
                xy[0], xy[1]
            ));
        }
        let ly = mt + 16.0 * i as f64 + 10.0;
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{}\" y=\"{}\">{}</text>\n",
            ml + pw + 8.0,
            ml + pw + 28.0,
            ml + pw + 34.0,
            ly + 4.0,
            xml_escape(&s.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_valid_svg() {
        let s = line_chart(
            "t",
            "x",
            "y",
            &[Series {
                label: "a".into(),
                points: vec![(1.0, 0.5), (10.0, 0.9)],
            }],
            true,
        );
        assert!(s.starts_with("<svg"));
        assert!(s.contains("polyline"));
        assert!(s.ends_with("</svg>\n"));
    }
}
