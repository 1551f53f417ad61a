//! Legacy ASCII VTK export of field snapshots for external plotting
//! (streamlines, isotherms).

use std::io::Write;
use std::path::Path;

use crate::assembly::DofLayout;
use crate::ensemble::Member;
use crate::error::Result;
use crate::mesh::TriMesh;

/// Write velocity, temperature, and pressure vertex data on the triangulation.
pub fn write_fields(path: &Path, mesh: &TriMesh, layout: &DofLayout, member: &Member, title: &str) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "{title}")?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET UNSTRUCTURED_GRID")?;
    let nv = mesh.n_vertices();
    writeln!(f, "POINTS {nv} double")?;
    for v in &mesh.vertices {
        writeln!(f, "{} {} 0", v[0], v[1])?;
    }
    let nt = mesh.n_triangles();
    writeln!(f, "CELLS {nt} {}", 4 * nt)?;
    for t in &mesh.triangles {
        writeln!(f, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(f, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(f, "5")?;
    }
    writeln!(f, "POINT_DATA {nv}")?;
    writeln!(f, "VECTORS velocity double")?;
    for vtx in 0..nv {
        let (ux, uy) = match layout.velocity_dof(vtx, 0) {
            Some(d) => (member.u.values[d], member.u.values[d + 1]),
            None => (0.0, 0.0),
        };
        writeln!(f, "{ux} {uy} 0")?;
    }
    writeln!(f, "SCALARS temperature double 1")?;
    writeln!(f, "LOOKUP_TABLE default")?;
    for vtx in 0..nv {
        writeln!(f, "{}", member.temp.values[vtx])?;
    }
    writeln!(f, "SCALARS pressure double 1")?;
    writeln!(f, "LOOKUP_TABLE default")?;
    for vtx in 0..nv {
        let p = layout.pressure_dof(vtx).map_or(0.0, |d| member.p.values[d]);
        writeln!(f, "{p}")?;
    }
    Ok(())
}
