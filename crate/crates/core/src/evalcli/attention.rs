//! Attention matrices as comma-separated tables and SVG heatmaps.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// `T × S` attention weights: one row per decoded symbol, one column per
/// frame (frame numbers start at 1).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTable {
    pub labels: Vec<String>,
    pub frames: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
}

impl AttentionTable {
    pub fn new(labels: Vec<String>, weights: Vec<Vec<f64>>) -> Result<Self> {
        let s = weights.first().map_or(0, Vec::len);
        if labels.len() != weights.len() || s == 0 || weights.iter().any(|r| r.len() != s) {
            return Err(Error::shape(
                "attention table",
                format!("{} labels for {} rows of width {s}", labels.len(), weights.len()),
            ));
        }
        Ok(AttentionTable {
            labels,
            frames: (1..=s).collect(),
            weights,
        })
    }

    /// Frame number with the largest weight in each row (first on ties).
    pub fn argmax(&self) -> Vec<usize> {
        self.weights
            .iter()
            .map(|row| {
                let mut best = 0;
                for (i, &w) in row.iter().enumerate() {
                    if w > row[best] {
                        best = i;
                    }
                }
                self.frames[best]
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("symbol");
        for f in &self.frames {
            write!(out, ",{f}").unwrap();
        }
        out.push_str(",argmax\n");
        for ((label, row), arg) in self.labels.iter().zip(&self.weights).zip(self.argmax()) {
            out.push_str(label);
            for w in row {
                // `{:e}` on f64 prints the shortest exact representation.
                write!(out, ",{w:e}").unwrap();
            }
            writeln!(out, ",{arg}").unwrap();
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Data(format!("attention table: {msg}"));
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty".into()))?.split(',').collect();
        if header.len() < 3 || header[0] != "symbol" || header[header.len() - 1] != "argmax" {
            return Err(bad("unexpected header".into()));
        }
        let frames = header[1..header.len() - 1]
            .iter()
            .map(|f| f.parse::<usize>().map_err(|e| bad(format!("frame {f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut labels = Vec::new();
        let mut weights = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(bad(format!("row {:?} has {} cells", cells[0], cells.len())));
            }
            labels.push(cells[0].to_string());
            weights.push(
                cells[1..cells.len() - 1]
                    .iter()
                    .map(|c| c.parse::<f64>().map_err(|e| bad(format!("{c:?}: {e}"))))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(AttentionTable {
            labels,
            frames,
            weights,
        })
    }

    /// Grayscale heatmap, darker for larger weights; argmax cells are
    /// marked with a `+`.
    pub fn to_svg(&self) -> String {
        const CELL: usize = 16;
        const MARGIN: usize = 40;
        let (t, s) = (self.weights.len(), self.frames.len());
        let (w, h) = (MARGIN + s * CELL + 8, MARGIN + t * CELL + 8);
        let mut out = String::new();
        writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="monospace" font-size="10">"#
        )
        .unwrap();
        writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
        for (j, f) in self.frames.iter().enumerate() {
            let x = MARGIN + j * CELL + CELL / 2;
            writeln!(out, r#"<text x="{x}" y="{}" text-anchor="middle">{f}</text>"#, MARGIN - 6).unwrap();
        }
        let argmax = self.argmax();
        for (i, (label, row)) in self.labels.iter().zip(&self.weights).enumerate() {
            let y = MARGIN + i * CELL;
            writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                MARGIN - 6,
                y + CELL - 4,
                escape(label)
            )
            .unwrap();
            for (j, &a) in row.iter().enumerate() {
                let shade = (255.0 * (1.0 - a.clamp(0.0, 1.0))).round() as u8;
                let x = MARGIN + j * CELL;
                writeln!(
                    out,
                    r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},{shade})"/>"#
                )
                .unwrap();
                if self.frames[j] == argmax[i] {
                    writeln!(
                        out,
                        r#"<text x="{}" y="{}" text-anchor="middle" fill="red">+</text>"#,
                        x + CELL / 2,
                        y + CELL - 4
                    )
                    .unwrap();
                }
            }
        }
        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_frame_is_one_column_of_ones() {
        let t = AttentionTable::new(vec!["A".into(), "</s>".into()], vec![vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(t.argmax(), vec![1, 1]);
        let back = AttentionTable::parse_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![vec![0.1, 0.2, 0.7], vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]];
        let t = AttentionTable::new(vec!["C".into(), "A".into()], rows).unwrap();
        let back = AttentionTable::parse_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
        assert_eq!(t.argmax(), vec![3, 1]);
    }

    #[test]
    fn malformed_tables_rejected() {
        assert!(AttentionTable::new(vec!["A".into()], vec![vec![0.5], vec![0.5]]).is_err());
        assert!(AttentionTable::new(vec!["A".into(), "B".into()], vec![vec![1.0], vec![0.5, 0.5]]).is_err());
        assert!(AttentionTable::parse_csv("").is_err());
        assert!(AttentionTable::parse_csv("symbol,1,argmax\nA,x,1\n").is_err());
        assert!(AttentionTable::parse_csv("symbol,1,2,argmax\nA,1.0,1\n").is_err());
    }

    #[test]
    fn svg_has_one_cell_per_weight() {
        let t = AttentionTable::new(vec!["<A&B>".into()], vec![vec![0.25, 0.75]]).unwrap();
        let svg = t.to_svg();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<rect x=").count(), 2);
        assert!(svg.contains("&lt;A&amp;B&gt;"));
    }
}
