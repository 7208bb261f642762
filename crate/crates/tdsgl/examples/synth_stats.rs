use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;
use tdsgl::*;

// measure: of user pairs with P >= beta, how many share a dominant topic?
fn main() {
    let a: Vec<String> = std::env::args().collect();
    let topics: usize = a.get(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let zipf: f64 = a.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.2);
    let intp: f64 = a.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.88);
    let cfg = tdsgl::synth::SynthConfig {
        num_users: 1891, num_items: 15438, interactions: 92_834,
        topics, zipf_exponent: zipf, in_topic_prob: intp, seed: 77,
    };
    let ds0 = tdsgl::synth::generate(&cfg).unwrap();
    let ds = tdsgl::split_dataset(&ds0, (0.8, 0.1, 0.1), 77).unwrap();
    let r = interaction_matrix(&ds);
    let (pu, _) = cooccurrence(&r);

    // infer each user's dominant topic from its items' topic assignment.
    // items were assigned topics round-robin over a seed-derived shuffle; we
    // recover the true assignment by regenerating the same shuffle.
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x7379_6e74_685f_7631);
    let mut items: Vec<u32> = (0..cfg.num_items as u32).collect();
    items.shuffle(&mut rng);
    let mut item_topic = vec![0usize; cfg.num_items];
    for (k, &item) in items.iter().enumerate() { item_topic[item as usize] = k % topics; }

    let per_user = ds.train_items_by_user();
    let dom: Vec<usize> = per_user.iter().map(|its| {
        let mut c = vec![0usize; topics];
        for &i in its { c[item_topic[i as usize]] += 1; }
        c.iter().enumerate().max_by_key(|(_, &v)| v).map(|(t, _)| t).unwrap_or(0)
    }).collect();

    for beta in [6u32, 8, 10] {
        let mut same = 0usize;
        let mut tot = 0usize;
        for (u, v, p) in pu.iter() {
            if u == v as usize || p < beta as f64 { continue; }
            tot += 1;
            if dom[u] == dom[v as usize] { same += 1; }
        }
        println!("beta={beta}: FN pairs={tot} same-dominant-topic purity={:.1}%", 100.0*same as f64/tot.max(1) as f64);
    }
    // random-pair baseline purity
    let mut rng2 = ChaCha20Rng::seed_from_u64(9);
    let mut same = 0usize;
    use rand::Rng;
    for _ in 0..100000 { 
        let u = rng2.random_range(0..1891usize); let v = rng2.random_range(0..1891usize);
        if u != v && dom[u] == dom[v] { same += 1; }
    }
    println!("random-pair purity baseline: {:.1}%", same as f64/1000.0);
}
