//! Deterministic ordering of scored candidates.
//!
//! Scores closer than a tie tolerance are treated as equal and the
//! candidates are then ordered by ascending universe index. Groups are formed
//! greedily against the first (best) score of each group, so a sorted run
//! `a, a + eps/2, a + eps` lands in a single group.

/// Scores within this distance of each other are considered tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ScoreOrder {
    /// Larger score first (similarities).
    Descending,
    /// Smaller score first (aggregated ranks).
    Ascending,
}

/// Orders `(index, score)` pairs best-first and returns the indices.
pub(crate) fn order_by_score(mut items: Vec<(usize, f64)>, order: ScoreOrder) -> Vec<usize> {
    items.sort_by(|a, b| {
        let by_score = match order {
            ScoreOrder::Descending => b.1.total_cmp(&a.1),
            ScoreOrder::Ascending => a.1.total_cmp(&b.1),
        };
        by_score.then(a.0.cmp(&b.0))
    });

    let mut start = 0;
    while start < items.len() {
        let head = items[start].1;
        let mut end = start + 1;
        while end < items.len() && (items[end].1 - head).abs() <= TIE_TOLERANCE {
            end += 1;
        }
        if end - start > 1 {
            items[start..end].sort_by_key(|item| item.0);
        }
        start = end;
    }
    items.into_iter().map(|(i, _)| i).collect()
}
