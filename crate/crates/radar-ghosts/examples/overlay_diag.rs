//! Scratch diagnostic: overlay feasibility across offset pairs.

use radar_ghosts::experiment::corridor_benchmark;
use radar_ghosts::simulate::{generate_sequence, overlay_sequences, Scenario};
use radar_ghosts::types::{Label, Split};

fn main() {
    let cfg = corridor_benchmark(7);
    let base = &cfg.scenarios[0].scenario;
    let a = generate_sequence(
        &Scenario {
            seed: 11,
            ..base.clone()
        },
        Split::Train,
    )
    .unwrap();
    let b = generate_sequence(
        &Scenario {
            seed: 22,
            ..base.clone()
        },
        Split::Train,
    )
    .unwrap();

    let out_len = 12;
    let max_off = a.frames.len() - out_len;
    let mut ok = 0;
    let mut total = 0;
    let mut label_pairs: std::collections::BTreeMap<String, usize> = Default::default();
    for oa in (0..=max_off).step_by(4) {
        for ob in (0..=max_off).step_by(4) {
            total += 1;
            match overlay_sequences(&[&a, &b], &[oa, ob], 0.8, out_len) {
                Ok(_) => ok += 1,
                Err(radar_ghosts::Error::OverlapViolation {
                    frame,
                    instance_a,
                    instance_b,
                    ..
                }) => {
                    // Identify the labels of the violating instances.
                    let find_label = |seq: &radar_ghosts::types::Sequence,
                                      off: usize,
                                      frame: usize,
                                      which: u32|
                     -> String {
                        // Remap: source0 ids assigned first in encounter order.
                        let mut next = 1u32;
                        let mut map: std::collections::BTreeMap<(usize, u32), u32> =
                            Default::default();
                        for (k, (s, o)) in [(&a, oa), (&b, ob)].iter().enumerate() {
                            for i in 0..=frame {
                                for p in &s.frames[o + i].points {
                                    if p.annotation.instance_id != 0 {
                                        map.entry((k, p.annotation.instance_id))
                                            .or_insert_with(|| {
                                                let v = next;
                                                next += 1;
                                                v
                                            });
                                    }
                                }
                            }
                        }
                        let _ = (seq, off);
                        for ((k, orig), new) in &map {
                            if *new == which {
                                let s = if *k == 0 { &a } else { &b };
                                for p in &s.frames[(if *k == 0 { oa } else { ob }) + frame].points
                                {
                                    if p.annotation.instance_id == *orig {
                                        return format!("s{k}:{}", p.annotation.label);
                                    }
                                }
                                return format!("s{k}:?{orig}");
                            }
                        }
                        "?".into()
                    };
                    let la = find_label(&a, oa, frame, instance_a);
                    let lb = find_label(&b, ob, frame, instance_b);
                    *label_pairs.entry(format!("{la}+{lb}")).or_insert(0) += 1;
                }
                Err(e) => panic!("{e}"),
            }
        }
    }
    println!("valid {ok}/{total}");
    let mut pairs: Vec<_> = label_pairs.into_iter().collect();
    pairs.sort_by_key(|(_, c)| std::cmp::Reverse(*c));
    for (pair, count) in pairs.iter().take(12) {
        println!("{pair}: {count}");
    }
    let _ = Label::Real;
}
