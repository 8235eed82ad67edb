use unilabel_train::pipeline::{run_ablation, AblationRow};
use unilabel_train::ExperimentConfig;

/// Noise band for the ordering of seed-averaged accuracies.
const BAND: f64 = 1.0;

#[test]
fn components_improve_in_order_on_the_toy_world() {
    let rows = [AblationRow::Mbr, AblationRow::MbrUm, AblationRow::MbrUmA3, AblationRow::Full];
    let table = run_ablation(&ExperimentConfig::toy(), &[0, 1, 2], &rows, None).unwrap();
    print!("{}", table.render());
    let means: Vec<f64> = rows.iter().map(|&r| table.row(r).unwrap().mean).collect();
    for (w, pair) in rows.windows(2).zip(means.windows(2)) {
        assert!(pair[1] >= pair[0] - BAND, "{} {:.2} then {} {:.2}", w[0].name(), pair[0], w[1].name(), pair[1]);
    }
    // the plain average sits far below everything with an attention or uncertainty term
    assert!(means[0] < means[1] - 10.0);
}
