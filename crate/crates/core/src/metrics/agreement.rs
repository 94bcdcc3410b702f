use ndarray::ArrayView2;

use crate::aggregation::IdSet;
use crate::corpus::{Corpus, Utterance};
use crate::error::{Error, Result};

/// Fraction of rater pairs on the utterance that chose the same class.
/// `None` for utterances with fewer than two ratings.
pub fn pairwise_agreement(u: &Utterance) -> Option<f64> {
    let n = u.ratings.len();
    if n < 2 {
        return None;
    }
    let mut agree = 0usize;
    for a in 0..n {
        for b in a + 1..n {
            if u.ratings[a].class_name == u.ratings[b].class_name {
                agree += 1;
            }
        }
    }
    Some(agree as f64 / (n * (n - 1) / 2) as f64)
}

/// Top and bottom `fraction` of utterances ranked by pairwise agreement.
/// Ties are broken by utterance id; utterances with a single rating are not
/// ranked.
pub fn agreement_split(corpus: &Corpus, fraction: f64) -> Result<(IdSet, IdSet)> {
    if !(fraction > 0.0 && fraction < 0.5) {
        return Err(Error::InvalidArgument(format!("fraction must lie in (0, 0.5), got {fraction}")));
    }
    let mut scored: Vec<(f64, &str)> = corpus
        .utterances()
        .iter()
        .filter_map(|u| pairwise_agreement(u).map(|s| (s, u.id.as_str())))
        .collect();
    let k = (fraction * scored.len() as f64).round() as usize;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let high = scored.iter().take(k).map(|(_, id)| id.to_string()).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    let low = scored.iter().take(k).map(|(_, id)| id.to_string()).collect();
    Ok((high, low))
}

fn euclid(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient under Euclidean distance. Points in singleton
/// clusters score 0.
pub fn silhouette(points: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    let n = points.nrows();
    if labels.len() != n {
        return Err(Error::shape(n, labels.len()));
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::InvalidArgument("silhouette needs at least two clusters".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        let li = labels[i];
        if sizes[li] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += euclid(points.row(i), points.row(j));
            }
        }
        let a = sums[li] / (sizes[li] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != li && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EmotionClassSet;
    use ndarray::array;

    #[test]
    fn unanimous_ranks_above_split() {
        let cs = EmotionClassSet::parse("N,A").unwrap();
        let c = Corpus::new(
            "t",
            cs,
            vec![
                Utterance::from_votes("split", ["N", "A", "N", "A"]),
                Utterance::from_votes("zz_unanimous", ["A", "A", "A", "A"]),
                Utterance::from_votes("mostly", ["A", "A", "A", "N"]),
                Utterance::from_votes("single", ["A"]),
            ],
        )
        .unwrap();
        assert_eq!(pairwise_agreement(c.get("split").unwrap()), Some(2.0 / 6.0));
        assert_eq!(pairwise_agreement(c.get("single").unwrap()), None);
        let (high, low) = agreement_split(&c, 0.34).unwrap();
        assert_eq!(high.into_iter().collect::<Vec<_>>(), vec!["zz_unanimous"]);
        assert_eq!(low.into_iter().collect::<Vec<_>>(), vec!["split"]);
        assert!(agreement_split(&c, 0.5).is_err());
    }

    #[test]
    fn two_percent_of_hundred() {
        let cs = EmotionClassSet::parse("N,A").unwrap();
        let utts = (0..100)
            .map(|i| Utterance::from_votes(format!("u{i:03}"), if i % 3 == 0 { ["N", "N", "A"] } else { ["N", "N", "N"] }))
            .collect();
        let (high, low) = agreement_split(&Corpus::new("t", cs, utts).unwrap(), 0.02).unwrap();
        assert_eq!((high.len(), low.len()), (2, 2));
    }

    #[test]
    fn silhouette_hand_case() {
        let pts = array![[0.0, 0.0], [0.0, 1.0], [4.0, 0.0], [4.0, 1.0]];
        let s = silhouette(pts.view(), &[0, 0, 1, 1]).unwrap();
        // a = 1, b = (4 + sqrt(17)) / 2 for every point
        let b = (4.0 + 17f64.sqrt()) / 2.0;
        assert!((s - (b - 1.0) / b).abs() < 1e-12);
        assert!(silhouette(pts.view(), &[0, 0, 0, 0]).is_err());
    }
}
