use evsr::datapipe::resize_plane_bilinear;
use evsr::eventrepr::*;
use evsr::eventsim::{Event, EventStream};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_stream(seed: u64, n: usize, w: usize, h: usize, t_end: u64) -> EventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events: Vec<Event> = (0..n)
        .map(|_| {
            Event::new(
                rng.gen_range(0..=t_end),
                rng.gen_range(0..w as u16),
                rng.gen_range(0..h as u16),
                if rng.gen_bool(0.5) { 1 } else { -1 },
            )
        })
        .collect();
    events.sort_by_key(Event::sort_key);
    EventStream::new(w, h, 0, t_end, events).unwrap()
}

#[test]
fn thousand_events_are_all_counted() {
    let s = random_stream(1, 1000, 7, 5, 50_000);
    let g = voxelize(&s, 16).unwrap();
    let mut oracle = vec![0usize; 7 * 5 * 16 * 2];
    for e in s.events() {
        let bin = ((16 * e.t) / 50_000).min(15) as usize;
        let ch = usize::from(e.p < 0);
        oracle[((e.y as usize * 7 + e.x as usize) * 16 + bin) * 2 + ch] += 1;
    }
    assert_eq!(g.total(), 1000.0);
    for (a, b) in g.data().iter().zip(&oracle) {
        assert_eq!(*a as usize, *b);
    }
}

#[test]
fn raster_of_uniform_counts_is_uniform() {
    let (w, h, c) = (5, 4, 3);
    let events: Vec<Event> = (0..h as u16)
        .flat_map(|y| {
            (0..w as u16).flat_map(move |x| (0..c).map(move |k| Event::new(10 + k, x, y, 1)))
        })
        .collect();
    let mut events = events;
    events.sort_by_key(Event::sort_key);
    let s = EventStream::new(w, h, 0, 100, events).unwrap();
    let img = rasterize_window(&s, 11, 7).unwrap();
    for y in 0..11 {
        for x in 0..7 {
            assert_eq!(img.get(0, y, x), c as f32);
            assert_eq!(img.get(1, y, x), 0.0);
        }
    }
    let empty = rasterize_window(&EventStream::empty(3, 3, 0, 9).unwrap(), 6, 6).unwrap();
    assert!(empty.data().iter().all(|&v| v == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn voxel_mass_is_conserved(seed in any::<u64>(), n in 0usize..400, m in 1usize..24) {
        let s = random_stream(seed, n, 6, 4, 9_999);
        let g = voxelize(&s, m).unwrap();
        prop_assert_eq!(g.total(), n as f64);
        prop_assert!(g.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn bins_are_monotone_in_time(seed in any::<u64>(), m in 1usize..32) {
        let s = random_stream(seed, 200, 3, 3, 77_777);
        let bins: Vec<usize> = s.events().iter().map(|e| segment_of(e.t, 0, 77_777, m)).collect();
        prop_assert!(bins.windows(2).all(|p| p[0] <= p[1]));
        prop_assert!(bins.iter().all(|&b| b < m));
    }

    #[test]
    fn window_selection_is_idempotent(seed in any::<u64>(), t in 0u64..20_000, dt in 0u64..5_000) {
        let s = random_stream(seed, 300, 4, 4, 20_000);
        let once = select_window(&s, t, dt).unwrap();
        let twice = select_window(&once, t, dt).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.events().iter().all(|e| e.t + dt >= t && e.t <= t + dt));
    }

    #[test]
    fn bilinear_resize_is_convex(seed in any::<u64>(), wi in 1usize..9, hi in 1usize..9, wo in 1usize..20, ho in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src: Vec<f64> = (0..wi * hi).map(|_| rng.gen_range(0.0..10.0)).collect();
        let lo = src.iter().copied().fold(f64::INFINITY, f64::min);
        let hi_v = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let out = resize_plane_bilinear(&src, wi, hi, wo, ho);
        prop_assert!(out.iter().all(|&v| v >= lo && v <= hi_v));
        let flat = resize_plane_bilinear(&vec![lo; wi * hi], wi, hi, wo, ho);
        prop_assert!(flat.iter().all(|&v| v == lo));
    }
}
