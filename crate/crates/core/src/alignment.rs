//! Compression of the frame-level paralinguistic matrix onto the subword grid
//! of the semantic matrix.
//!
//! Two methods are provided:
//!
//! * [`AlignmentMethod::Subwords`]: frames are split into `n_subwords`
//!   contiguous groups of near-equal size and each group is averaged.
//! * [`AlignmentMethod::Characters`]: group sizes are proportional to the
//!   character length of each subword and each group is summed, so longer
//!   subwords carry more weight.
//!
//! When a segment has fewer frames than subwords, both methods fall back to
//! index sampling with repetition: output row `j` is frame
//! `⌊j · n_frames / n_subwords⌋`.

use serde::{Deserialize, Serialize};

use crate::numkit::{Matrix, NumError, NumResult, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AlignmentMethod {
    Subwords,
    Characters,
}

impl AlignmentMethod {
    pub const ALL: [AlignmentMethod; 2] = [AlignmentMethod::Subwords, AlignmentMethod::Characters];

    /// Label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            AlignmentMethod::Subwords => "#subwords",
            AlignmentMethod::Characters => "#characters",
        }
    }
}

impl std::fmt::Display for AlignmentMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlignmentMethod::Subwords => "subwords",
            AlignmentMethod::Characters => "characters",
        })
    }
}

/// An alignment method together with the per-subword character lengths it
/// may need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentSpec {
    pub method: AlignmentMethod,
    pub char_lengths: Vec<usize>,
}

impl AlignmentSpec {
    pub fn new(method: AlignmentMethod, char_lengths: Vec<usize>) -> NumResult<Self> {
        if method == AlignmentMethod::Characters {
            check_char_lengths(&char_lengths)?;
        }
        Ok(Self {
            method,
            char_lengths,
        })
    }

    pub fn apply<T: Real>(&self, h_p: &Matrix<T>, n_subwords: usize) -> NumResult<Matrix<T>> {
        align(self.method, h_p, n_subwords, &self.char_lengths)
    }
}

fn check_char_lengths(char_lengths: &[usize]) -> NumResult<()> {
    if char_lengths.is_empty() {
        return Err(NumError::Empty {
            op: "align_characters",
        });
    }
    if char_lengths.contains(&0) {
        return Err(NumError::InvalidArgument(
            "character lengths must all be >= 1".into(),
        ));
    }
    Ok(())
}

/// Dispatches to [`align_subwords`] or [`align_characters`].
pub fn align<T: Real>(
    method: AlignmentMethod,
    h_p: &Matrix<T>,
    n_subwords: usize,
    char_lengths: &[usize],
) -> NumResult<Matrix<T>> {
    match method {
        AlignmentMethod::Subwords => align_subwords(h_p, n_subwords),
        AlignmentMethod::Characters => {
            if char_lengths.len() != n_subwords {
                return Err(NumError::InvalidArgument(format!(
                    "{} character lengths for {n_subwords} subwords",
                    char_lengths.len()
                )));
            }
            align_characters(h_p, char_lengths)
        }
    }
}

/// Group sizes for the equal split: base size `⌊n_frames / n_subwords⌋`, the
/// first `n_frames mod n_subwords` groups take one extra frame.
pub fn subword_group_sizes(n_frames: usize, n_subwords: usize) -> Vec<usize> {
    let base = n_frames / n_subwords;
    let extra = n_frames % n_subwords;
    (0..n_subwords)
        .map(|j| base + usize::from(j < extra))
        .collect()
}

/// Frame counts per subword for the character method: largest-remainder
/// apportionment of `n_frames` proportional to `char_lengths`, then every
/// zero count is raised to one frame taken from the subword that most exceeds
/// its exact quota. Ties go to the lower subword index.
///
/// Requires `n_frames >= char_lengths.len()`.
pub fn apportion_frames(n_frames: usize, char_lengths: &[usize]) -> Vec<usize> {
    let n = char_lengths.len();
    debug_assert!(n_frames >= n && n > 0);
    let total: u128 = char_lengths.iter().map(|&c| c as u128).sum();
    let frames = n_frames as u128;

    // Exact quota of subword i is frames * c_i / total.
    let mut counts: Vec<usize> = char_lengths
        .iter()
        .map(|&c| (frames * c as u128 / total) as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    // Descending remainder, stable on index.
    order.sort_by(|&a, &b| {
        let ra = frames * char_lengths[a] as u128 % total;
        let rb = frames * char_lengths[b] as u128 % total;
        rb.cmp(&ra)
    });
    for &i in order.iter().take(n_frames - assigned) {
        counts[i] += 1;
    }

    // Excess over quota, scaled by `total` so it stays integral.
    let excess = |counts: &[usize], i: usize| -> i128 {
        counts[i] as i128 * total as i128 - frames as i128 * char_lengths[i] as i128
    };
    for i in 0..n {
        if counts[i] == 0 {
            let donor = (0..n)
                .filter(|&j| counts[j] > 1)
                .max_by(|&a, &b| excess(&counts, a).cmp(&excess(&counts, b)).then(b.cmp(&a)))
                .expect("n_frames >= n_subwords guarantees a donor");
            counts[donor] -= 1;
            counts[i] = 1;
        }
    }
    counts
}

fn check_input<T: Real>(h_p: &Matrix<T>, n_subwords: usize, op: &'static str) -> NumResult<()> {
    if h_p.rows() == 0 || n_subwords == 0 {
        return Err(NumError::Empty { op });
    }
    Ok(())
}

fn sample_rows<T: Real>(h_p: &Matrix<T>, n_subwords: usize) -> Matrix<T> {
    let n_frames = h_p.rows();
    let mut out = Matrix::zeros(n_subwords, h_p.cols());
    for j in 0..n_subwords {
        out.row_mut(j).copy_from_slice(h_p.row(j * n_frames / n_subwords));
    }
    out
}

/// Reduces contiguous row groups of `sizes` to one row each; `average`
/// divides each sum by its group size.
fn pool_groups<T: Real>(h_p: &Matrix<T>, sizes: &[usize], average: bool) -> Matrix<T> {
    let mut out = Matrix::zeros(sizes.len(), h_p.cols());
    let mut start = 0;
    for (j, &size) in sizes.iter().enumerate() {
        let row = out.row_mut(j);
        for f in start..start + size {
            for (o, &v) in row.iter_mut().zip(h_p.row(f)) {
                *o = *o + v;
            }
        }
        if average {
            let n = T::lit(size as f64);
            for o in row.iter_mut() {
                *o = *o / n;
            }
        }
        start += size;
    }
    out
}

/// Equal contiguous split of frames over subwords, averaged per group.
pub fn align_subwords<T: Real>(h_p: &Matrix<T>, n_subwords: usize) -> NumResult<Matrix<T>> {
    check_input(h_p, n_subwords, "align_subwords")?;
    if h_p.rows() < n_subwords {
        return Ok(sample_rows(h_p, n_subwords));
    }
    let sizes = subword_group_sizes(h_p.rows(), n_subwords);
    Ok(pool_groups(h_p, &sizes, true))
}

/// Character-proportional contiguous split of frames, summed per group.
pub fn align_characters<T: Real>(h_p: &Matrix<T>, char_lengths: &[usize]) -> NumResult<Matrix<T>> {
    check_char_lengths(char_lengths)?;
    let n_subwords = char_lengths.len();
    check_input(h_p, n_subwords, "align_characters")?;
    if h_p.rows() < n_subwords {
        return Ok(sample_rows(h_p, n_subwords));
    }
    let sizes = apportion_frames(h_p.rows(), char_lengths);
    let out = pool_groups(h_p, &sizes, false);
    out.check_finite("align_characters")?;
    Ok(out)
}
