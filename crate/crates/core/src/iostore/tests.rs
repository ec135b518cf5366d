use super::*;
use crate::packer::tests::tiered_layout;
use crate::planner::{io_cost, MemoryTierPlan};
use crate::reorder::CacheOrder;
use crate::testkit::{random_case, sample_set};
use crate::workload::{direct_gather, write_synthetic_features, FeatureFile};
use crate::packer::{batched_pack, PackInput};
use crate::planner::build_disk_plan;
use crate::reorder::Reorderer;

fn check_against_oracle(features: &FeatureFile, batch: &AssembledBatch) {
    assert_eq!(batch.features.nodes, batch.sample.nodes);
    let expect = direct_gather(features, &batch.sample.nodes).unwrap();
    let got: Vec<u32> = batch.features.rows.iter().map(|x| x.to_bits()).collect();
    let want: Vec<u32> = expect.iter().map(|x| x.to_bits()).collect();
    assert_eq!(got, want, "batch {}", batch.batch_id());
}

fn assemble_all(store: &dyn FeatureSource, b: u64) -> AssembledBatch {
    let (partial, sample) = store.load_partial_input(b).unwrap();
    AssembledBatch::pair(store.assemble(partial).unwrap(), sample).unwrap()
}

#[test]
fn merge_requests_on_tiered_batch() {
    let order = CacheOrder::new(0, vec![2, 5, 11]).unwrap();
    assert_eq!(merge_page_requests(&[2, 5, 11], &order, 2).unwrap(), vec![0, 1]);
    assert_eq!(merge_page_requests(&[11, 2, 5], &order, 4).unwrap(), vec![0]);
    assert_eq!(merge_page_requests(&[2, 5, 11], &order, 1).unwrap(), vec![0, 1, 2]);
    assert!(merge_page_requests(&[], &order, 2).unwrap().is_empty());
    assert!(merge_page_requests(&[3], &order, 2).is_err());
}

#[test]
fn tiered_partial_input_and_assembly() {
    let d = tempfile::tempdir().unwrap();
    let (features, _, layout) = tiered_layout(d.path());
    let store = LayoutStore::open(layout, StoreOptions::default()).unwrap();
    let (partial, sample) = store.load_partial_input(0).unwrap();
    let s = store.stats();
    assert_eq!(s.sequential_ops, 1);
    assert_eq!(s.random_ops, 2);
    assert_eq!(s.feature_pages(), 1 + 2);
    assert_eq!(s.bytes_required, 5 * 8);
    assert_eq!(partial.slots, vec![0, 3, 5, 2, 11]);
    let batch = AssembledBatch::pair(store.assemble(partial).unwrap(), sample).unwrap();
    check_against_oracle(&features, &batch);
    check_against_oracle(&features, &assemble_all(&store, 1));
}

#[test]
fn memory_resident_batch_reads_only_its_sample() {
    let d = tempfile::tempdir().unwrap();
    let features = write_synthetic_features(&d.path().join("f.bin"), 8, 4, 64, 2).unwrap();
    let samples = sample_set(vec![vec![3]]);
    let tiers = MemoryTierPlan {
        fast_capacity: 1,
        host_capacity: 0,
        fast_nodes: vec![3],
        host_nodes: vec![],
    };
    let plan = build_disk_plan(&samples, &tiers, 1, 1).unwrap();
    let orders = Reorderer::Identity.apply(&plan, &samples).unwrap();
    let input = PackInput {
        features: &features,
        samples: &samples,
        tiers: &tiers,
        plan: &plan,
        orders: &orders,
    };
    let (layout, _) = batched_pack(input, &d.path().join("l"), 1 << 16).unwrap();
    let store = LayoutStore::open(layout, StoreOptions::default()).unwrap();
    let (partial, sample) = store.load_partial_input(0).unwrap();
    assert!(partial.slots.is_empty());
    let s = store.stats();
    assert_eq!((s.feature_pages(), s.sample_pages, s.bytes_required), (0, 1, 0));
    assert_eq!(s.amplification(), None);
    let batch = AssembledBatch::pair(store.assemble(partial).unwrap(), sample).unwrap();
    assert_eq!(batch.features.rows.len(), 4);
    check_against_oracle(&features, &batch);
}

#[test]
fn layout_store_is_exact_and_bit_exact() {
    let d = tempfile::tempdir().unwrap();
    let case = random_case(d.path(), 11, 40);
    let layout = case.pack(&d.path().join("l"));
    let predicted = io_cost(&case.plan, &case.orders, case.features.header.geometry()).unwrap();
    for threads in [1, 3] {
        let store = LayoutStore::open(
            layout.clone(),
            StoreOptions {
                direct_io: false,
                io_threads: threads,
            },
        )
        .unwrap();
        for b in 0..store.num_batches() as u64 {
            let before = store.stats();
            let batch = assemble_all(&store, b);
            check_against_oracle(&case.features, &batch);
            let delta = store.stats().since(&before);
            let cost = predicted.per_batch[b as usize];
            assert_eq!(delta.feature_pages(), cost.total(), "batch {b}");
            // each cache page once, one sequential chunk read
            assert_eq!(delta.random_ops, cost.cache_pages);
            assert_eq!(delta.sequential_ops, 1);
            let chunk = &layout.manifest.batches[b as usize];
            let packed_bytes = chunk.packed.len() as u64 * u64::from(layout.manifest.row_bytes);
            let chunk_read = chunk.feature_len + chunk.sample_span(layout.manifest.page_size);
            assert!(chunk_read - (packed_bytes + chunk.sample_len) < 2 * 256);
        }
        assert_eq!(store.stats().feature_pages(), predicted.total_pages);
    }
}

#[test]
fn split_loads_match_combined_load() {
    let d = tempfile::tempdir().unwrap();
    let case = random_case(d.path(), 5, 20);
    let layout = case.pack(&d.path().join("l"));
    let a = LayoutStore::open(layout.clone(), StoreOptions::default()).unwrap();
    let b = LayoutStore::open(layout, StoreOptions::default()).unwrap();
    for id in 0..a.num_batches() as u64 {
        let (pa, sa) = a.load_partial_input(id).unwrap();
        let pb = b.load_features(id).unwrap();
        let sb = b.load_sample(id).unwrap();
        assert_eq!((pa, sa), (pb, sb));
    }
    let (sa, sb) = (a.stats(), b.stats());
    assert_eq!(sa.pages_read, sb.pages_read);
    assert_eq!(sa.sample_pages, sb.sample_pages);
    assert!(sa.sequential_ops < sb.sequential_ops);
}

#[test]
fn fine_grained_reads_one_page_per_feature() {
    let d = tempfile::tempdir().unwrap();
    let case = random_case(d.path(), 2, 20);
    let store = FineGrainedStore::open(
        &case.features,
        case.samples.clone(),
        case.tiers.clone(),
        StoreOptions::default(),
    )
    .unwrap();
    let mut disk_nodes = 0;
    for b in 0..store.num_batches() as u64 {
        check_against_oracle(&case.features, &assemble_all(&store, b));
        disk_nodes += case.samples.batches[b as usize]
            .nodes
            .iter()
            .filter(|&&v| !case.tiers.is_cached(v))
            .count() as u64;
    }
    let s = store.stats();
    assert_eq!(s.random_ops, disk_nodes);
    assert_eq!(s.sample_pages, 0);
    let h = case.features.header;
    let amp = s.amplification().unwrap();
    assert!((amp - h.page_size as f64 / h.row_bytes() as f64).abs() < 1e-12);
}

#[test]
fn corrupt_partial_input_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let (_, _, layout) = tiered_layout(d.path());
    let store = LayoutStore::open(layout, StoreOptions::default()).unwrap();
    let mut partial = store.load_features(0).unwrap();
    partial.slots.swap(0, 1);
    assert!(store.assemble(partial).is_err());
    assert!(store.load_features(9).is_err());
}
