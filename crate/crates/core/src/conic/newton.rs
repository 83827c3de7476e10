//! Newton systems `H d = r` where `H` is block diagonal (log-det blocks plus local rank-one
//! terms) plus a few global rank-one terms, optionally bordered by one extra scalar.

use super::compiled::{Compiled, Sparse};
use crate::linalg::herm_dim;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// `w · (v, vs)(v, vs)ᵀ`, where `vs` multiplies the bordering scalar.
#[derive(Debug, Clone)]
pub(crate) struct Piece {
    pub source: usize,
    pub w: f64,
    pub v: Sparse,
    pub vs: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Structure {
    comp_coords: Vec<Vec<usize>>,
    coord: Vec<(usize, usize)>,
    source_comp: Vec<Option<usize>>,
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
            self.parent[small] = big;
            self.size[big] += self.size[small];
        }
    }
}

impl Structure {
    /// Groups variables into dense blocks. Sources (terms whose Hessian couples the listed
    /// variables) are merged smallest first while the block stays within `cap` coordinates;
    /// the rest are treated as global low-rank corrections.
    pub fn build(c: &Compiled, sources: &[Vec<usize>], cap: usize) -> Self {
        let nv = c.dims.len();
        let mut uf = UnionFind { parent: (0..nv).collect(), size: c.dims.iter().map(|&m| herm_dim(m)).collect() };
        let own: Vec<usize> = sources.iter().map(|s| s.iter().map(|&v| herm_dim(c.dims[v])).sum()).collect();
        let mut order: Vec<usize> = (0..sources.len()).collect();
        order.sort_by_key(|&k| own[k]);
        let mut local = vec![false; sources.len()];
        for k in order {
            let vars = &sources[k];
            if vars.len() <= 1 {
                local[k] = !vars.is_empty();
                continue;
            }
            let mut roots: Vec<usize> = vars.iter().map(|&v| uf.find(v)).collect();
            roots.sort_unstable();
            roots.dedup();
            let merged: usize = roots.iter().map(|&r| uf.size[r]).sum();
            if merged <= cap {
                for w in roots.windows(2) {
                    uf.union(w[0], w[1]);
                }
                local[k] = true;
            }
        }
        let mut comp_id = vec![usize::MAX; nv];
        let mut comp_coords: Vec<Vec<usize>> = Vec::new();
        let mut coord = vec![(0, 0); c.n];
        for v in 0..nv {
            let r = uf.find(v);
            if comp_id[r] == usize::MAX {
                comp_id[r] = comp_coords.len();
                comp_coords.push(Vec::new());
            }
            let ci = comp_id[r];
            for k in 0..herm_dim(c.dims[v]) {
                let g = c.offsets[v] + k;
                coord[g] = (ci, comp_coords[ci].len());
                comp_coords[ci].push(g);
            }
        }
        let source_comp = sources
            .iter()
            .zip(&local)
            .map(|(vars, &l)| if l { Some(comp_id[uf.find(vars[0])]) } else { None })
            .collect();
        Structure { comp_coords, coord, source_comp }
    }
}

pub(crate) struct Factored<'a> {
    st: &'a Structure,
    chol: Vec<Cholesky<f64, Dyn>>,
    u: Vec<Sparse>,
    y: DMatrix<f64>,
    small: Option<Cholesky<f64, Dyn>>,
    border: Option<Border>,
}

struct Border {
    b: Vec<f64>,
    q: Vec<f64>,
    denom: f64,
}

pub(crate) fn cholesky_with_shift(mut m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    if n == 0 {
        return Cholesky::new(m);
    }
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift = 0.0;
    for _ in 0..6 {
        if let Some(ch) = Cholesky::new(m.clone()) {
            return Some(ch);
        }
        let next = if shift == 0.0 { 1e-13 * scale } else { shift * 100.0 };
        for i in 0..n {
            m[(i, i)] += next - shift;
        }
        shift = next;
    }
    None
}

impl<'a> Factored<'a> {
    /// `logdet[v]` is the Hessian of `-log det X_v` in real coordinates.
    pub fn new(st: &'a Structure, c: &Compiled, logdet: &[DMatrix<f64>], pieces: &[Piece], bordered: bool) -> Option<Self> {
        let mut blocks: Vec<DMatrix<f64>> = st.comp_coords.iter().map(|cc| DMatrix::zeros(cc.len(), cc.len())).collect();
        for (v, h) in logdet.iter().enumerate() {
            let off = c.offsets[v];
            let (ci, l0) = st.coord[off];
            let d = h.nrows();
            let mut view = blocks[ci].view_mut((l0, l0), (d, d));
            view += h;
        }
        let mut u = Vec::new();
        for p in pieces {
            if p.v.is_empty() || p.w == 0.0 {
                continue;
            }
            match st.source_comp[p.source] {
                Some(ci) => {
                    let blk = &mut blocks[ci];
                    let loc: Vec<usize> = p.v.idx.iter().map(|&g| st.coord[g].1).collect();
                    for (a, &la) in loc.iter().enumerate() {
                        let wa = p.w * p.v.val[a];
                        for (b, &lb) in loc.iter().enumerate() {
                            blk[(la, lb)] += wa * p.v.val[b];
                        }
                    }
                }
                None => {
                    let s = p.w.sqrt();
                    u.push(Sparse { idx: p.v.idx.clone(), val: p.v.val.iter().map(|x| x * s).collect() });
                }
            }
        }
        let chol = blocks.into_iter().map(cholesky_with_shift).collect::<Option<Vec<_>>>()?;
        let n = c.n;
        let mut f = Factored { st, chol, u, y: DMatrix::zeros(n, 0), small: None, border: None };
        if !f.u.is_empty() {
            let r = f.u.len();
            let mut y = DMatrix::zeros(n, r);
            let mut col = vec![0.0; n];
            for (j, uj) in f.u.iter().enumerate() {
                col.iter_mut().for_each(|x| *x = 0.0);
                uj.axpy(1.0, &mut col);
                let sol = f.block_solve(&col);
                y.column_mut(j).copy_from_slice(&sol);
            }
            let mut s = DMatrix::identity(r, r);
            for i in 0..r {
                for j in 0..r {
                    let yj = y.column(j);
                    s[(i, j)] += f.u[i].idx.iter().zip(&f.u[i].val).map(|(&g, v)| v * yj[g]).sum::<f64>();
                }
            }
            let s = (&s + s.transpose()) * 0.5;
            f.small = Some(cholesky_with_shift(s)?);
            f.y = y;
        }
        if bordered {
            let mut b = vec![0.0; n];
            let mut cc = 0.0;
            for p in pieces {
                if p.vs != 0.0 {
                    p.v.axpy(p.w * p.vs, &mut b);
                    cc += p.w * p.vs * p.vs;
                }
            }
            let q = f.solve_x(&b);
            let bq: f64 = b.iter().zip(&q).map(|(x, y)| x * y).sum();
            let denom = (cc - bq).max(1e-14 * cc.max(1e-300));
            f.border = Some(Border { b, q, denom });
        }
        Some(f)
    }

    fn block_solve(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        for (cc, ch) in self.st.comp_coords.iter().zip(&self.chol) {
            let local = DVector::from_iterator(cc.len(), cc.iter().map(|&g| r[g]));
            let sol = ch.solve(&local);
            for (k, &g) in cc.iter().enumerate() {
                out[g] = sol[k];
            }
        }
        out
    }

    /// Solves with the x-part of the matrix only.
    fn solve_x(&self, r: &[f64]) -> Vec<f64> {
        let mut y = self.block_solve(r);
        if let Some(small) = &self.small {
            let t = DVector::from_iterator(self.u.len(), self.u.iter().map(|uj| uj.dot(&y)));
            let t = small.solve(&t);
            let corr = &self.y * t;
            for (yi, ci) in y.iter_mut().zip(corr.iter()) {
                *yi -= ci;
            }
        }
        y
    }

    pub fn solve(&self, rx: &[f64], rs: f64) -> (Vec<f64>, f64) {
        match &self.border {
            None => (self.solve_x(rx), 0.0),
            Some(bd) => {
                let p = self.solve_x(rx);
                let bp: f64 = bd.b.iter().zip(&p).map(|(x, y)| x * y).sum();
                let ds = (rs - bp) / bd.denom;
                let dx = p.iter().zip(&bd.q).map(|(pi, qi)| pi - qi * ds).collect();
                (dx, ds)
            }
        }
    }
}
