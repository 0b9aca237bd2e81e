use std::fmt::Write;

use crate::explain::FeatureRanking;

const BAR_HEIGHT: f64 = 18.0;
const GAP: f64 = 6.0;
const LABEL_WIDTH: f64 = 150.0;
const PLOT_WIDTH: f64 = 420.0;
const TOP: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Horizontal bar chart of a ranking, most important at the top.
pub fn importance_svg(ranking: &FeatureRanking, title: &str, config_hash: &str) -> String {
    let n = ranking.len();
    let max = ranking
        .entries
        .iter()
        .map(|e| e.importance)
        .fold(0.0, f64::max);
    let width = LABEL_WIDTH + PLOT_WIDTH + 90.0;
    let height = TOP + n as f64 * (BAR_HEIGHT + GAP) + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<!-- config_hash: {config_hash} -->");
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" font-size="14" font-weight="bold">{}</text>"#,
        LABEL_WIDTH,
        escape(title)
    );
    for (i, e) in ranking.entries.iter().enumerate() {
        let y = TOP + i as f64 * (BAR_HEIGHT + GAP);
        let w = if max > 0.0 { e.importance / max * PLOT_WIDTH } else { 0.0 };
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LABEL_WIDTH - 8.0,
            y + BAR_HEIGHT * 0.75,
            escape(&e.name)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{LABEL_WIDTH:.1}" y="{y:.1}" width="{w:.3}" height="{BAR_HEIGHT:.1}" fill="#4682b4"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{:.4}</text>"#,
            LABEL_WIDTH + w + 4.0,
            y + BAR_HEIGHT * 0.75,
            e.importance
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bars_follow_rank_order() {
        let names: Vec<String> = ["a", "b<c", "d"].iter().map(|s| s.to_string()).collect();
        let r = FeatureRanking::from_importances(&names, &[0.1, 0.4, 0.2]).unwrap();
        let svg = importance_svg(&r, "t", "abc");
        assert!(svg.contains("<!-- config_hash: abc -->"));
        assert!(svg.contains("b&lt;c"));
        let pos = |n: &str| svg.find(&format!(">{n}</text>")).unwrap();
        assert!(pos("b&lt;c") < pos("d") && pos("d") < pos("a"));
        // longest bar belongs to the top feature
        assert!(svg.contains(r#"width="420.000""#));
        assert_eq!(svg.matches("<rect").count(), 4);
    }
}
