use std::io::{BufRead, Write};

use super::{BoundaryMarker, MeshError, TriMesh};

/// Writes the ASCII `trimesh 2` format, including the boundary section.
pub fn write_mesh<W: Write>(mesh: &TriMesh, mut w: W) -> Result<(), MeshError> {
    writeln!(w, "trimesh 2")?;
    writeln!(w, "nodes {}", mesh.n_nodes())?;
    for p in mesh.nodes() {
        writeln!(w, "{} {}", p[0], p[1])?;
    }
    writeln!(w, "triangles {}", mesh.n_triangles())?;
    for t in mesh.triangles() {
        writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "boundary {}", mesh.boundary_edges().len())?;
    for e in mesh.boundary_edges() {
        writeln!(w, "{} {} {}", e.nodes[0], e.nodes[1], e.marker.as_str())?;
    }
    Ok(())
}

struct Tokens {
    items: Vec<(usize, String)>,
    pos: usize,
}

impl Tokens {
    fn new<R: BufRead>(r: R) -> Result<Self, MeshError> {
        let mut items = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let content = line.split('#').next().unwrap_or("");
            for tok in content.split_whitespace() {
                items.push((lineno + 1, tok.to_string()));
            }
        }
        Ok(Self { items, pos: 0 })
    }

    fn line(&self) -> usize {
        self.items
            .get(self.pos)
            .or_else(|| self.items.last())
            .map_or(0, |(l, _)| *l)
    }

    fn next(&mut self) -> Option<&str> {
        let tok = self.items.get(self.pos).map(|(_, s)| s.as_str());
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn peek(&self) -> Option<&str> {
        self.items.get(self.pos).map(|(_, s)| s.as_str())
    }

    fn err(&self, msg: impl Into<String>) -> MeshError {
        MeshError::Parse { line: self.line(), msg: msg.into() }
    }

    fn expect(&mut self, word: &str) -> Result<(), MeshError> {
        match self.next() {
            Some(t) if t == word => Ok(()),
            Some(t) => {
                let t = t.to_string();
                Err(self.err(format!("expected `{word}`, found `{t}`")))
            }
            None => Err(self.err(format!("expected `{word}`, found end of input"))),
        }
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, MeshError> {
        let tok = self.next().map(str::to_string);
        match tok {
            Some(t) => t.parse().map_err(|_| self.err(format!("invalid {what} `{t}`"))),
            None => Err(self.err(format!("missing {what}"))),
        }
    }
}

/// Reads the ASCII `trimesh 2` format. Without a `boundary` section all
/// boundary edges are marked inner.
pub fn read_mesh<R: BufRead>(r: R) -> Result<TriMesh, MeshError> {
    let mut tok = Tokens::new(r)?;
    tok.expect("trimesh")?;
    let dim: usize = tok.parse("dimension")?;
    if dim != 2 {
        return Err(tok.err(format!("unsupported dimension {dim}")));
    }
    tok.expect("nodes")?;
    let n: usize = tok.parse("node count")?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = tok.parse("coordinate")?;
        let y: f64 = tok.parse("coordinate")?;
        nodes.push([x, y]);
    }
    tok.expect("triangles")?;
    let m: usize = tok.parse("triangle count")?;
    let mut triangles = Vec::with_capacity(m);
    for _ in 0..m {
        triangles.push([tok.parse("node index")?, tok.parse("node index")?, tok.parse("node index")?]);
    }
    let mut mesh = TriMesh::new(nodes, triangles)?;

    if tok.peek() == Some("boundary") {
        tok.next();
        let b: usize = tok.parse("boundary edge count")?;
        let mut markers = mesh.boundary_markers();
        for _ in 0..b {
            let i: usize = tok.parse("node index")?;
            let j: usize = tok.parse("node index")?;
            let marker_tok: String = tok.parse("marker")?;
            let marker: BoundaryMarker = marker_tok.parse().map_err(|e: String| tok.err(e))?;
            let idx = mesh.find_boundary_edge(i, j).ok_or(MeshError::NotABoundaryEdge(i, j))?;
            markers[idx] = marker;
        }
        mesh = mesh.with_boundary_markers(&markers)?;
    }
    if let Some(extra) = tok.peek() {
        let extra = extra.to_string();
        return Err(tok.err(format!("unexpected trailing token `{extra}`")));
    }
    Ok(mesh)
}
