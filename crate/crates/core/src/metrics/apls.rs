use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::graph::{GraphLocation, RoadGraph};

use super::sampling::chain_samples;
use super::AplsParams;

/// One-directional APLS: pairs are drawn on `reference`, the other graph is
/// `candidate`. `None` when the reference has no connected pair.
pub(crate) fn apls_one_way(
    reference: &RoadGraph,
    candidate: &RoadGraph,
    params: &AplsParams,
    stream: u64,
) -> Option<(f64, usize)> {
    let samples = chain_samples(reference, params.point_spacing);
    let labels = reference.component_labels();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of = std::collections::HashMap::new();
    for (i, loc) in samples.iter().enumerate() {
        let comp = labels[reference.edges()[loc.edge][0]];
        let g = *group_of.entry(comp).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    let weights: Vec<f64> = groups
        .iter()
        .map(|g| (g.len() as f64) * (g.len() as f64 - 1.0))
        .collect();
    let dist = WeightedIndex::new(&weights).ok()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(stream);
    let pairs: Vec<(usize, usize)> = (0..params.pairs)
        .map(|_| {
            let g = &groups[dist.sample(&mut rng)];
            let i = rng.gen_range(0..g.len());
            let mut j = rng.gen_range(0..g.len() - 1);
            if j >= i {
                j += 1;
            }
            (g[i], g[j])
        })
        .collect();

    let project = |loc: &GraphLocation| -> Option<GraphLocation> {
        if candidate.is_empty() {
            return None;
        }
        candidate
            .project_point(loc.point)
            .ok()
            .filter(|p| p.point.dist(loc.point) <= params.snap_cutoff)
    };
    let costs: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&samples[i], &samples[j]);
            let l_ref = reference
                .graph_distance(a, b)
                .expect("pairs are drawn within one component");
            if l_ref <= 0.0 {
                return 0.0;
            }
            match (project(a), project(b)) {
                (Some(pa), Some(pb)) => match candidate.graph_distance(&pa, &pb) {
                    Some(l) => ((l_ref - l).abs() / l_ref).min(1.0),
                    None => 1.0,
                },
                _ => 1.0,
            }
        })
        .collect();
    let mean = costs.iter().sum::<f64>() / costs.len() as f64;
    Some((1.0 - mean, costs.len()))
}
