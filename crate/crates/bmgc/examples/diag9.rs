use bmgc::clustering::kmeans;
use bmgc::csbm::{csbm_generate, drop_isolated, CsbmParams};
use bmgc::eval::evaluate;
use bmgc::metrics::{acd, edge_homophily, linear_probe};
use bmgc::propagate::sgc_aggregate;
use bmgc::sparse::normalize_adjacency;
use ndarray::prelude::*;

fn main() {
    for phi in [0.0, 0.5, 1.0] {
        let p = CsbmParams::with_defaults(phi, 7);
        let (adj, x, labels) = csbm_generate(&p).unwrap();
        let hr = edge_homophily(&adj, &labels).unwrap();
        let (sub, sx, sy, _) = drop_isolated(&adj, x.view(), &labels).unwrap();
        let norm = normalize_adjacency(&sub, false).unwrap();
        let agg = sgc_aggregate(&norm, sx.view(), 3).unwrap();
        let acd_v = acd(agg.view(), &sy).unwrap();
        // within-class spread of aggregated rows
        let c0: Vec<usize> = (0..sy.len()).filter(|&i| sy.ids()[i] == 0).collect();
        let mean0 = agg.select(Axis(0), &c0).mean_axis(Axis(0)).unwrap();
        let spread: f64 = c0.iter().map(|&i| {
            let d = &agg.row(i) - &mean0;
            d.dot(&d)
        }).sum::<f64>() / c0.len() as f64;
        let probe = linear_probe(agg.view(), &sy, 0.3, 5).unwrap();
        let km = kmeans(agg.view(), 2, 0, 10).unwrap();
        let nmi = evaluate(&km.assignments, &sy).unwrap().nmi;
        println!("phi={phi}: hr {hr:.4} | ACD {acd_v:.4} | within-class spread {:.4} | probe {probe:.4} | kmeans NMI {nmi:.4}", spread.sqrt());
    }
}
