//! Edit distance, letter error rate and letter confusion counts.

use crate::error::{Error, Result};

/// One column of an alignment: `(reference, hypothesis)`, with `None` on
/// the side of a deletion or insertion.
pub type AlignedPair = (Option<usize>, Option<usize>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditOps {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub matches: usize,
    pub alignment: Vec<AlignedPair>,
}

impl EditOps {
    pub fn distance(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Levenshtein alignment of `hypothesis` against `reference` with unit
/// costs. Among minimum-cost alignments the backtrace prefers a
/// substitution (or match), then a deletion, then an insertion.
pub fn edit_distance(hypothesis: &[usize], reference: &[usize]) -> EditOps {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }

    let mut ops = EditOps {
        substitutions: 0,
        deletions: 0,
        insertions: 0,
        matches: 0,
        alignment: Vec::with_capacity(n.max(m)),
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if d[(i - 1) * w + j - 1] + usize::from(!same) == here {
                if same {
                    ops.matches += 1;
                } else {
                    ops.substitutions += 1;
                }
                ops.alignment.push((Some(reference[i - 1]), Some(hypothesis[j - 1])));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            ops.deletions += 1;
            ops.alignment.push((Some(reference[i - 1]), None));
            i -= 1;
        } else {
            ops.insertions += 1;
            ops.alignment.push((None, Some(hypothesis[j - 1])));
            j -= 1;
        }
    }
    ops.alignment.reverse();
    ops
}

/// Pooled letter error rate in percent over `(hypothesis, reference)`
/// pairs: total edits over total reference letters.
pub fn letter_error_rate<H, R>(pairs: &[(H, R)]) -> Result<f64>
where
    H: AsRef<[usize]>,
    R: AsRef<[usize]>,
{
    let mut edits = 0usize;
    let mut letters = 0usize;
    for (h, r) in pairs {
        edits += edit_distance(h.as_ref(), r.as_ref()).distance();
        letters += r.as_ref().len();
    }
    if letters == 0 {
        return Err(Error::invalid("letter error rate needs at least one reference letter"));
    }
    Ok(100.0 * edits as f64 / letters as f64)
}

/// Counts of reference letters (rows) against hypothesized letters
/// (columns). The extra last column holds deletions, the extra last row
/// insertions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    n_letters: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_letters: usize) -> Self {
        let n = n_letters + 1;
        ConfusionMatrix {
            n_letters,
            counts: vec![0; n * n],
        }
    }

    /// Index of the deletion column and insertion row.
    pub fn gap(&self) -> usize {
        self.n_letters
    }

    pub fn size(&self) -> usize {
        self.n_letters + 1
    }

    pub fn add(&mut self, alignment: &[AlignedPair]) -> Result<()> {
        let gap = self.gap();
        for &(r, h) in alignment {
            let (r, h) = (r.unwrap_or(gap), h.unwrap_or(gap));
            if r > gap || h > gap || (r == gap && h == gap) {
                return Err(Error::invalid(format!("alignment pair ({r}, {h}) out of range")));
            }
            let n = self.size();
            self.counts[r * n + h] += 1;
        }
        Ok(())
    }

    pub fn from_alignments<'a, I>(n_letters: usize, alignments: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [AlignedPair]>,
    {
        let mut m = ConfusionMatrix::new(n_letters);
        for a in alignments {
            m.add(a)?;
        }
        Ok(m)
    }

    pub fn count(&self, reference: usize, hypothesis: usize) -> u64 {
        self.counts[reference * self.size() + hypothesis]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Per reference letter, the empirical distribution over hypothesized
    /// letters and deletion. Rows without observations are all zero; the
    /// insertion row is left out.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        (0..self.n_letters)
            .map(|r| {
                let row = &self.counts[r * n..(r + 1) * n];
                let total: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                    .collect()
            })
            .collect()
    }

    /// Comma-separated counts with letter headers; `-` labels the gap.
    pub fn to_csv(&self) -> String {
        let label = |i: usize| -> String {
            if i == self.gap() {
                "-".into()
            } else {
                char::from(b'A' + i as u8).to_string()
            }
        };
        let n = self.size();
        let mut out = String::from("ref\\hyp");
        for c in 0..n {
            out.push(',');
            out.push_str(&label(c));
        }
        out.push('\n');
        for r in 0..n {
            out.push_str(&label(r));
            for c in 0..n {
                out.push_str(&format!(",{}", self.count(r, c)));
            }
            out.push('\n');
        }
        out
    }
}
