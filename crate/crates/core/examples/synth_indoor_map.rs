//! Writes the 147-point indoor scenario and its throughput map.
//!
//! The layout is a 21 m × 7 m strip with a corridor along y = 4 and six rooms
//! on each side, one door per room. Path loss is log-distance plus a fixed
//! penetration loss for every wall the straight line crosses.
//!
//! Usage: `cargo run -p locrelay --example synth_indoor_map [OUT_DIR]`

use std::fmt::Write as _;
use std::path::PathBuf;

use locrelay::radio::{direct_throughput, relay_throughput, LinkModelParams, ThroughputTableSet};
use locrelay::scenario::{throughput_map_csv, BlockedEdge, Coord, GridScenario, StateIndex};

const NX: usize = 21;
const NY: usize = 7;
const CORRIDOR_Y: f64 = 4.0;
/// Room boundaries lie halfway between these x values and the next.
const ROOM_ENDS: [f64; 5] = [4.0, 7.0, 11.0, 15.0, 18.0];
const DOORS: [f64; 6] = [2.0, 6.0, 10.0, 13.0, 17.0, 20.0];
const WALL_LOSS_DB: f64 = 16.0;
const AP: Coord = Coord::new(12.0, 4.0);
const DEST: Coord = Coord::new(5.0, 1.0);

fn link() -> LinkModelParams {
    LinkModelParams { pl_d0_db: 40.0, d0_m: 1.0, n_exp: 2.0, tx_power_dbm: 8.0, noise_floor_dbm: -85.0, ..LinkModelParams::default() }
}

struct Segment {
    a: Coord,
    b: Coord,
}

fn wall_segments() -> Vec<Segment> {
    let mut w = Vec::new();
    for x in ROOM_ENDS.map(|e| e + 0.5) {
        w.push(Segment { a: Coord::new(x, 0.5), b: Coord::new(x, CORRIDOR_Y - 0.5) });
        w.push(Segment { a: Coord::new(x, CORRIDOR_Y + 0.5), b: Coord::new(x, NY as f64 + 0.5) });
    }
    for y in [CORRIDOR_Y - 0.5, CORRIDOR_Y + 0.5] {
        let mut x0 = 0.5;
        for d in DOORS {
            w.push(Segment { a: Coord::new(x0, y), b: Coord::new(d - 0.5, y) });
            x0 = d + 0.5;
        }
        w.push(Segment { a: Coord::new(x0, y), b: Coord::new(NX as f64 + 0.5, y) });
    }
    w
}

fn cross(o: Coord, a: Coord, b: Coord) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn intersects(p: Coord, q: Coord, s: &Segment) -> bool {
    let d1 = cross(s.a, s.b, p);
    let d2 = cross(s.a, s.b, q);
    let d3 = cross(p, q, s.a);
    let d4 = cross(p, q, s.b);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn path_loss(params: &LinkModelParams, walls: &[Segment], p: Coord, q: Coord) -> f64 {
    let d = p.dist(q).max(params.d0_m);
    let n_walls = walls.iter().filter(|s| intersects(p, q, s)).count();
    params.pl_d0_db + 10.0 * params.n_exp * (d / params.d0_m).log10() + WALL_LOSS_DB * n_walls as f64
}

fn blocked_edges(g: &GridScenario) -> Vec<BlockedEdge> {
    let mut out = Vec::new();
    for i in 0..g.n_points() {
        for j in g.grid_neighbours(i) {
            if j <= i {
                continue;
            }
            let (a, b) = (g.coord(i), g.coord(j));
            let vertical_wall = a.y != CORRIDOR_Y && ROOM_ENDS.iter().any(|&e| a.x.min(b.x) == e && a.y == b.y);
            let horizontal_wall = a.x == b.x && (a.y.min(b.y) == CORRIDOR_Y - 1.0 || a.y.min(b.y) == CORRIDOR_Y) && !DOORS.contains(&a.x);
            if vertical_wall || horizontal_wall {
                out.push(BlockedEdge::new(StateIndex::from_zero_based(i), StateIndex::from_zero_based(j)));
            }
        }
    }
    out
}

fn main() {
    let out_dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scenarios".into()));
    let mut g = GridScenario::new(NX, NY, 1.0, Coord::new(1.0, 1.0), AP, DEST).expect("layout is valid");
    g.walls = blocked_edges(&g);
    g.validate().expect("walls join neighbours");

    let params = link();
    let walls = wall_segments();
    let t_dir = direct_throughput(&params, path_loss(&params, &walls, AP, DEST));
    let t_rel: Vec<f64> = (0..g.n_points())
        .map(|m| {
            let x = g.coord(m);
            relay_throughput(&params, path_loss(&params, &walls, AP, x), path_loss(&params, &walls, x, DEST))
        })
        .collect();
    let tables = ThroughputTableSet::new(vec![t_dir; g.n_points()], vec![t_rel]).expect("finite throughput");
    let better = tables.t_relay[0].iter().filter(|&&v| v > t_dir).count();
    eprintln!("direct {t_dir:.3} Mbit/s, relay better at {better} of {} points", g.n_points());

    let mut scn = String::new();
    let _ = writeln!(scn, "# Indoor office floor: 21 x 7 points at 1 m, corridor along y = 4.");
    let _ = writeln!(scn, "# Generated by the synth_indoor_map example; edit that program, not this file.");
    let _ = writeln!(scn, "name = indoor_147\n");
    let _ = writeln!(scn, "[grid]\nnx = {NX}\nny = {NY}\nspacing_m = 1\norigin_x_m = 1\norigin_y_m = 1\n");
    let _ = writeln!(
        scn,
        "[nodes]\nmobility_role = mobile_relay\nap_x_m = {}\nap_y_m = {}\ndest_x_m = {}\ndest_y_m = {}\nmobile_relays = 1\n",
        AP.x, AP.y, DEST.x, DEST.y
    );
    let _ = writeln!(scn, "[mobility]\nspeed_mps = 0.5\n");
    let _ = writeln!(scn, "[updates]\ntau_hz = 1\nmu_hz = 100000\np_loss = 0\nqueue_size = 2\n");
    let _ = writeln!(scn, "[location_error]\nsigma_m = 1\n");
    let _ = writeln!(
        scn,
        "[radio]\npl_d0_db = {}\npath_loss_exponent = {}\ntx_power_dbm = {}\nnoise_floor_dbm = {}\nricean_k = 6\nb_msdu_bytes = 1500\n",
        params.pl_d0_db, params.n_exp, params.tx_power_dbm, params.noise_floor_dbm
    );
    let _ = writeln!(scn, "[walls]");
    for chunk in g.walls.chunks(8) {
        let items: Vec<String> = chunk.iter().map(|w| format!("{}-{}", w.a, w.b)).collect();
        let _ = writeln!(scn, "edge = {}", items.join(", "));
    }
    let _ = writeln!(scn, "\n[policy]\nheuristic_lo_m = 8,1\nheuristic_hi_m = 11,6\n");
    let _ = writeln!(scn, "[simulation]\ndata_tx_interval_s = 25\nduration_s = 10000\nwarmup_s = 500\nreplications = 20\nseed = 7\n");
    let _ = writeln!(scn, "[throughput_map]\npath = indoor_147_map.csv");

    std::fs::create_dir_all(&out_dir).expect("create output directory");
    std::fs::write(out_dir.join("indoor_147.scn"), scn).expect("write scenario");
    std::fs::write(out_dir.join("indoor_147_map.csv"), throughput_map_csv(&g, &tables)).expect("write map");
}
