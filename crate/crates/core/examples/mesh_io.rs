//! Read a PQR file and an OFF mesh, validate the surface and build
//! node patches.
//!
//! `cargo run --release --example mesh_io -- molecule.pqr surface.off`
//! Without arguments a small built-in tetrahedron is used.

use pbbem::io::{parse_off, parse_pqr, read_off, read_pqr, write_off};
use pbbem::surface::{build_node_patches, validate_and_orient};

const PQR: &str = "REMARK two ions\n\
ATOM      1  NA  ION     1       0.000   0.000   0.000  1.0000 1.1000\n\
ATOM      2  CL  ION     2       0.800   0.000   0.000 -1.0000 1.7000\n";

// inward-facing on purpose; validation re-orients it
const OFF: &str = "OFF\n4 4 0\n-2 -2 -2\n2 2 -2\n2 -2 2\n-2 2 2\n3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n";

fn main() -> pbbem::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (atoms, raw) = match args.as_slice() {
        [pqr, off] => (read_pqr(pqr)?, read_off(off)?),
        _ => (parse_pqr(PQR)?, parse_off(OFF)?),
    };
    let net: f64 = atoms.iter().map(|a| a.charge).sum();
    println!("{} atoms, net charge {net:+.3} e", atoms.len());

    let mesh = validate_and_orient(&raw)?;
    println!(
        "{} vertices, {} triangles, area {:.3} Å², volume {:.3} Å³",
        mesh.vertices.len(),
        mesh.triangles.len(),
        mesh.total_area,
        mesh.volume
    );
    let patches = build_node_patches(&mesh);
    let total: f64 = patches.iter().map(|p| p.area).sum();
    println!("{} node patches, total patch area {total:.3} Å²", patches.len());
    for (i, p) in patches.iter().take(4).enumerate() {
        println!("  node {i}: normal {:.3?}, {} sub-elements", p.normal.as_slice(), p.sub_elements.len());
    }
    if args.is_empty() {
        print!("re-oriented mesh:\n{}", write_off(&mesh.to_raw()));
    }
    Ok(())
}
