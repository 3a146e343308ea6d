mod common;

use common::entropy_bits;
use profiling_core::dataspace::{facet_entropy, DataspaceReport};
use profiling_core::evaluation::{js_divergence, spearman};
use profiling_core::store::{ingest, read_triples, ExemplarTable, RawRecord, Split};
use profiling_core::{GroupQuery, NbConfig, NbModel, Profiler};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn records() -> impl Strategy<Value = Vec<RawRecord>> {
    prop::collection::vec(prop::collection::vec((0u8..4, 0u8..5), 0..5), 1..40).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, cells)| {
                cells
                    .into_iter()
                    .fold(RawRecord::new(format!("e{i}")), |r, (f, v)| r.with(&format!("f{f}"), &format!("v{v}")))
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn ingest_is_deterministic(recs in records(), seed in 0u64..1000) {
        let (a, ra) = ingest(recs.clone(), 3, seed).unwrap();
        let (b, rb) = ingest(recs, 3, seed).unwrap();
        prop_assert_eq!(&ra, &rb);
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        a.write_binary(&mut ba).unwrap();
        b.write_binary(&mut bb).unwrap();
        prop_assert_eq!(ba, bb);
        prop_assert_eq!(a.schema().fingerprint(), b.schema().fingerprint());
        for f in a.schema().facets() {
            prop_assert!(f.size() <= 3);
        }
    }
}

#[test]
fn store_round_trips_through_files() {
    let text = "e1\tcolor\tred\ne1\tsize\tS\ne2\tcolor\tblue\ne3\tcolor\tred\ne3\tsize\tL\ne4\n";
    let (table, _) = ingest(read_triples(text.as_bytes()).unwrap(), 3000, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    table.save_store(dir.path()).unwrap();
    assert_eq!(ExemplarTable::load_store(dir.path()).unwrap(), table);
    let report = DataspaceReport::from_table(&table);
    assert!(report.to_text().contains("color"));
}

/// Facets whose value skew falls off from sharply peaked to flat: the flatter
/// the facet, the further any profile sits from the true value.
#[test]
fn divergence_rises_with_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let decay = [3.0, 2.0, 1.2, 0.8, 0.5, 0.25, 0.0];
    let weights: Vec<Vec<f64>> = decay.iter().map(|b: &f64| (0..6).map(|j| (-b * j as f64).exp()).collect()).collect();
    let draw = |rng: &mut ChaCha8Rng, w: &[f64]| {
        let mut x = rng.gen::<f64>() * w.iter().sum::<f64>();
        for (j, wj) in w.iter().enumerate() {
            if x < *wj {
                return j;
            }
            x -= wj;
        }
        w.len() - 1
    };
    let recs: Vec<RawRecord> = (0..3000)
        .map(|i| {
            let mut r = RawRecord::new(format!("e{i}"));
            for (f, w) in weights.iter().enumerate() {
                let v = draw(&mut rng, w);
                r = r.with(&format!("f{f}"), &format!("v{v}"));
            }
            r
        })
        .collect();
    let (table, _) = ingest(recs, 3000, 5).unwrap();
    let nb = NbModel::fit(&table, NbConfig::default()).unwrap();
    let schema = table.schema();
    let mut entropies = Vec::new();
    let mut divergences = Vec::new();
    for f in 0..schema.len() {
        let counts = schema.facet(f).value_counts();
        let h = facet_entropy(counts).unwrap();
        assert!((h.bits - entropy_bits(counts)).abs() < 1e-9);
        let mut total = 0.0;
        let mut n = 0;
        for row in table.split_rows(Split::Test) {
            let Some(t) = row.cells[f] else { continue };
            let q = GroupQuery::from_cells(&row.cells, Some(f));
            let p = nb.predict_facet(&q, f).unwrap();
            let mut truth = vec![0.0; p.len()];
            truth[t as usize] = 1.0;
            total += js_divergence(&p, &truth).unwrap();
            n += 1;
        }
        entropies.push(h.normalized);
        divergences.push(total / n as f64);
    }
    let rho = spearman(&entropies, &divergences).unwrap();
    assert!(rho > 0.0 && entropies.windows(2).all(|w| w[0] < w[1]), "rho {rho}: {entropies:?} {divergences:?}");
}
