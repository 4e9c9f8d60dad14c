use newton_switch::basin::{sector_of, FlowOracle};
use newton_switch::output::{BasinImage, NON_CONVERGENT, WRONG_ZERO};
use newton_switch::problem::{CircleDiagonal, RootsOfUnity};
use newton_switch::{basin_scan, correct_zero_of, direction_field, table1, GridSpec, Mode, SolverConfig};

/// 4-connected components per palette index, counting only indices < 6.
fn zero_components(img: &BasinImage) -> usize {
    let (w, h) = (img.width, img.height);
    let mut seen = vec![false; w * h];
    let mut count = 0;
    for start in 0..w * h {
        let color = img.pixels[start];
        if seen[start] || color >= 6 {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(k) = stack.pop() {
            let (r, c) = (k / w, k % w);
            let mut push = |nr: usize, nc: usize| {
                let n = nr * w + nc;
                if !seen[n] && img.pixels[n] == color {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if r > 0 {
                push(r - 1, c);
            }
            if r + 1 < h {
                push(r + 1, c);
            }
            if c > 0 {
                push(r, c - 1);
            }
            if c + 1 < w {
                push(r, c + 1);
            }
        }
    }
    count
}

#[test]
fn as_image_has_six_sector_regions() {
    let report = basin_scan(&RootsOfUnity::new(6), &GridSpec::square(200), &SolverConfig::default(), 1).unwrap();
    let img = BasinImage::from_report(&report);
    assert_eq!(zero_components(&img), 6);
    // middle row, right and left edges: centres of sectors 0 and 3
    let mid = img.height / 2;
    assert_eq!(img.index_at(mid, img.width - 1), 0);
    assert_eq!(img.index_at(mid, 0), 3);
    let stray = img.pixels.iter().filter(|&&p| p == WRONG_ZERO || p == NON_CONVERGENT).count();
    assert!(stray < 20, "{stray} stray pixels");
}

#[test]
fn single_point_at_root() {
    for mode in Mode::ALL {
        let report = basin_scan(&RootsOfUnity::new(6), &GridSpec::single(1.0, 0.0), &SolverConfig::for_mode(mode), 1)
            .unwrap();
        assert_eq!(report.convergent_fraction, 1.0);
        assert_eq!(report.correct_fraction, 1.0);
    }
}

#[test]
fn degenerate_table_at_root() {
    let t = table1(&RootsOfUnity::new(6), &GridSpec::single(1.0, 0.0), &SolverConfig::default()).unwrap();
    for c in &t.columns {
        assert_eq!(c.correct_fraction, 1.0);
        assert!(c.relative_complexity > 0.0);
    }
    assert_eq!(t.column(Mode::NANS).unwrap().relative_complexity, 1.0);
}

#[test]
fn sector_matches_flow_integration() {
    let p = RootsOfUnity::new(6);
    let oracle = FlowOracle::default();
    for x0 in [[-0.4, 0.6], [2.0, 0.0], [0.3, -1.7], [-2.2, -0.9], [1.1, 2.9]] {
        assert_eq!(correct_zero_of(&x0, &p).unwrap(), oracle.zero_reached(&p, &x0).unwrap(), "{x0:?}");
    }
    assert_eq!(correct_zero_of(&[-0.4, 0.6], &p).unwrap(), 2);
}

#[test]
fn sectors_partition_the_circle() {
    for k in 0..3600 {
        let th = k as f64 * std::f64::consts::TAU / 3600.0 + 1e-4;
        let s = sector_of(&[th.cos(), th.sin()], 6).unwrap();
        let centre = s as f64 * std::f64::consts::PI / 3.0;
        let gap = (th - centre).rem_euclid(std::f64::consts::TAU);
        let gap = gap.min(std::f64::consts::TAU - gap);
        assert!(gap <= std::f64::consts::PI / 6.0 + 1e-12);
    }
}

#[test]
fn flow_oracle_defines_circle_basins() {
    let p = CircleDiagonal::default();
    assert_eq!(correct_zero_of(&[2.0, 0.5], &p).unwrap(), 0);
    assert_eq!(correct_zero_of(&[-0.5, -2.0], &p).unwrap(), 1);
    let report = basin_scan(&p, &GridSpec::new([0.2, 2.5, 0.3, 2.5], 9, 9).unwrap(), &SolverConfig::default(), 2).unwrap();
    assert_eq!(report.correct_fraction, 1.0);
}

#[test]
fn direction_field_examples() {
    let p = RootsOfUnity::new(6);
    let grid = GridSpec::new([-1.0, 1.0, 0.0, 0.0], 3, 1).unwrap();
    let raw = direction_field(&p, &grid, false).unwrap();
    assert_eq!(raw[1].vector, [-1.0, 0.0]);
    assert_eq!(raw[2].vector, [0.0, 0.0]);
    let tr = direction_field(&p, &grid, true).unwrap();
    assert!(tr[1].singular);
    assert!(!tr[2].singular);
    assert_eq!(tr[2].vector, [0.0, 0.0]);
}

#[test]
fn adaptive_modes_beat_classical_newton() {
    let grid = GridSpec::square(40);
    let p = RootsOfUnity::new(6);
    let t = table1(&p, &grid, &SolverConfig::default()).unwrap();
    let f = |m| t.column(m).unwrap().correct_fraction;
    assert!(f(Mode::AS) >= f(Mode::NANS));
    assert!(f(Mode::ANS) >= f(Mode::NANS));
}

#[test]
fn nas_agrees_with_nans_when_it_never_switches() {
    let p = RootsOfUnity::new(6);
    let grid = GridSpec::square(30);
    let nans = basin_scan(&p, &grid, &SolverConfig::for_mode(Mode::NANS), 1).unwrap();
    let nas = basin_scan(&p, &grid, &SolverConfig::for_mode(Mode::NAS), 1).unwrap();
    let mut compared = 0;
    for (a, b) in nans.points.iter().zip(&nas.points) {
        if !b.switched {
            assert_eq!(a.zero_index, b.zero_index);
            compared += 1;
        }
    }
    assert!(compared < grid.len(), "NAS should switch somewhere");
}
