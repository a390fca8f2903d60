//! The Goldberg tiling: counts, lookup and surface distances.

use lunamarket::selenography::{SelenographicCoord, Tiling, LUNAR_RADIUS_M};

fn main() {
    for m in 1..=4 {
        let t = Tiling::build(m, LUNAR_RADIUS_M).unwrap();
        println!(
            "gp({m},0): {:4} cells = 12 pentagons + {:4} hexagons (euler {})",
            t.cell_count(),
            t.hexagon_count(),
            t.euler_characteristic()
        );
    }

    let t = Tiling::build(3, LUNAR_RADIUS_M).unwrap();
    // a landing-site of interest: the lunar south pole region
    let site = SelenographicCoord::new(-89.5, 45.0);
    let cell = t.locate_cell(site);
    let center = t.cell_center(cell).unwrap();
    println!(
        "\n({}, {}) falls in {cell}, centered at ({:.3}, {:.3})",
        site.lat_deg, site.lon_deg, center.lat_deg, center.lon_deg
    );
    print!("neighbors:");
    for n in t.cell_neighbors(cell).unwrap() {
        let d = t.surface_distance_m(cell, n).unwrap();
        print!(" {n} ({:.0} km)", d / 1000.0);
    }
    println!();

    let equator = t.locate_cell(SelenographicCoord::new(0.0, 45.0));
    println!(
        "pole cell to equator cell: {:.0} km along the surface",
        t.surface_distance_m(cell, equator).unwrap() / 1000.0
    );
}
