use volising::analyze::{off_diagonal_moments, rescale_to_mean, similarity_q, summarize, Bins};
use volising::binarize::{build_spin_matrix, filter_degenerate, MappingParams};
use volising::infer::{infer_asynchronous, infer_equilibrium, infer_synchronous, Method};
use volising::ingest::{clip_and_grid, parse_ticks, TickFormat};
use volising::netexport::{from_edge_list_json, to_dot, to_edge_list_json, top_edges, Ranking};
use volising::stats::estimate_moments;
use volising::synth::synth_market_volumes;

#[test]
fn ticks_to_networks() {
    let grid = synth_market_volumes(8, 3, 4_000, &[4, 4], 1.0, 3).unwrap();
    let mut csv = Vec::new();
    grid.write_ticks(&mut csv).unwrap();

    let ticks = parse_ticks(&csv[..], &TickFormat::default()).unwrap();
    let gridded = clip_and_grid(&ticks, grid.stocks(), 3, 4_000, 4_000).unwrap();
    assert_eq!(gridded.grid, grid);
    assert_eq!((gridded.unknown_ticker, gridded.outside_window), (0, 0));

    let clipped = grid.clip_central(3_000).unwrap();
    let sm = build_spin_matrix(&clipped, MappingParams::new(20, 0.5)).unwrap();
    let (sm, dropped) = filter_degenerate(&sm).unwrap();
    assert!(dropped.is_empty());
    let mom = estimate_moments(&sm, &[20], Some(20)).unwrap();

    let models = [
        infer_equilibrium(&mom, 0.0).unwrap(),
        infer_synchronous(&mom, 20, 0.0).unwrap(),
        infer_asynchronous(&mom, 0.0).unwrap(),
    ];
    for (model, method) in models.iter().zip(Method::ALL) {
        assert_eq!(model.method, method);
        assert_eq!(model.directed, method.is_directed());
        assert_eq!(model.stocks, sm.stocks());
        assert!(model.j.iter().chain(model.h.iter()).all(|v| v.is_finite()));

        let summary = summarize(&model.j, &Bins::Count(10)).unwrap();
        assert!(summary.mean_abs > 0.0);

        let el = top_edges(model, 5, Ranking::Signed).unwrap();
        assert_eq!(el.edges.len(), 5);
        assert_eq!(from_edge_list_json(&to_edge_list_json(&el).unwrap()).unwrap(), el);
        let dot = to_dot(&el);
        assert_eq!(dot.lines().filter(|l| l.contains("coupling=")).count(), 5);
    }
    // compared at a common mean, as the summaries do
    let target = off_diagonal_moments(&models[0].j).0;
    let eq = rescale_to_mean(&models[0].j, target).unwrap();
    let syn = rescale_to_mean(&models[1].j, target).unwrap();
    let q = similarity_q(&eq, &syn).unwrap();
    assert!(q > 0.3);
}
