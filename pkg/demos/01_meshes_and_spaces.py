"""Tour of the study domains: templates, refinement, and shape diagnostics.

Run:  python demos/01_meshes_and_spaces.py
"""

from pheat import build_space, make_initial_mesh, mesh_quality, refine_uniform

for domain in ("unit_square", "centered_square", "shifted_square", "slit"):
    print(f"== {domain} ==")
    mesh = make_initial_mesh(domain)
    for _ in range(4):
        q = mesh_quality(mesh)
        space = build_space(mesh, 1)
        print(f"  level {mesh.level}: {mesh.num_triangles:5d} triangles, "
              f"{space.ndof:5d} P1 dofs ({space.interior_dofs.size:5d} interior), "
              f"h = {q.h_max:.4f}, gamma = {q.gamma:.4f}")
        mesh = refine_uniform(mesh)

# The slit domain duplicates the vertices on the open cut, so finite element
# functions may jump across it; both copies carry Dirichlet conditions.
slit = refine_uniform(make_initial_mesh("slit"))
coords = [tuple(v) for v in slit.vertices]
print("\nslit level 1: copies of (-0.5, 0):", coords.count((-0.5, 0.0)),
      "| copies of (0.5, 0):", coords.count((0.5, 0.0)),
      "| copies of the tip (0, 0):", coords.count((0.0, 0.0)))

# quadratic spaces identify edge DOFs across element boundaries
mesh = make_initial_mesh("unit_square")
for r in (1, 2, 3):
    print(f"unit square, degree {r}: ndof = {build_space(mesh, r).ndof}")
