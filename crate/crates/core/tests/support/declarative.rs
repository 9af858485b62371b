//! The declarative typing rules, with subsumption, decided by brute force.
//!
//! Over a finite type universe every judgment `Γ ⊢ e : t` and `Γ; A ⊢ c : t`
//! can be tabulated: the set of derivable expression types is upward closed
//! and the set of derivable command types is downward closed. Each rule is
//! evaluated over all choices of its premises' types, so a judgment is in the
//! table exactly when some derivation of it exists.

use permflow::ast::{Cmd, CmdKind, Expr, ExprKind};
use permflow::perms::PermSet;
use permflow::system::{FunId, System};
use permflow::types::BaseType;

/// Sets of types as bitmasks over `Declarative::all`.
type Set = u64;

pub struct Declarative<'a> {
    sys: &'a System,
    all: Vec<BaseType>,
}

type Gamma = Vec<(String, BaseType)>;

impl<'a> Declarative<'a> {
    pub fn new(sys: &'a System) -> Self {
        let lat = sys.lattice();
        let n = sys.universe().count();
        let cells = 1usize << n;
        let total = lat.len().pow(cells as u32);
        assert!(total <= 64, "type universe too large for brute force");
        let all = (0..total)
            .map(|mut k| {
                BaseType::from_fn(n, |_| {
                    let l = permflow::lattice::Level::from_index(k % lat.len());
                    k /= lat.len();
                    l
                })
            })
            .collect();
        Declarative { sys, all }
    }

    fn index(&self, t: &BaseType) -> usize {
        self.all.iter().position(|u| u == t).expect("type in universe")
    }

    fn up(&self, t: &BaseType) -> Set {
        self.mask(|u| t.leq(self.sys.lattice(), u))
    }

    fn down(&self, t: &BaseType) -> Set {
        self.mask(|u| u.leq(self.sys.lattice(), t))
    }

    fn mask(&self, f: impl Fn(&BaseType) -> bool) -> Set {
        self.all.iter().enumerate().filter(|(_, u)| f(u)).fold(0, |m, (i, _)| m | 1 << i)
    }

    fn members(&self, s: Set) -> impl Iterator<Item = &BaseType> + '_ {
        self.all.iter().enumerate().filter(move |(i, _)| s >> i & 1 == 1).map(|(_, t)| t)
    }

    fn down_closure(&self, s: Set) -> Set {
        self.members(s).fold(0, |m, t| m | self.down(t))
    }

    fn lookup(&self, g: &Gamma, x: &str) -> BaseType {
        g.iter().rev().find(|(y, _)| y == x).map(|(_, t)| t.clone()).unwrap_or_else(|| self.sys.consts[x].ty.clone())
    }

    /// All `t` with `Γ ⊢ e : t`.
    pub fn expr(&self, g: &Gamma, e: &Expr) -> Set {
        match &e.kind {
            ExprKind::Int(_) => self.up(&self.sys.domain.bottom()),
            ExprKind::Var(x) => self.up(&self.lookup(g, x)),
            ExprKind::Bin(_, a, b) => self.expr(g, a) & self.expr(g, b),
        }
    }

    /// All `t` with `Γ; A ⊢ c : t`, where `theta` is the permissions of `A`.
    pub fn cmd(&self, g: &mut Gamma, theta: PermSet, c: &Cmd) -> Set {
        match &c.kind {
            CmdKind::Assign(x, e) => {
                let gx = self.lookup(g, x);
                if self.expr(g, e) >> self.index(&gx) & 1 == 1 {
                    self.down(&gx)
                } else {
                    0
                }
            }
            CmdKind::If(e, a, b) => {
                let s = self.expr(g, e) & self.cmd(g, theta, a) & self.cmd(g, theta, b);
                self.down_closure(s)
            }
            CmdKind::While(e, a) => {
                let s = self.expr(g, e) & self.cmd(g, theta, a);
                self.down_closure(s)
            }
            CmdKind::Seq(a, b) => self.cmd(g, theta, a) & self.cmd(g, theta, b),
            CmdKind::LetVar { name, init, body, .. } => {
                let mut out = 0;
                for s in self.members(self.expr(g, init)).cloned().collect::<Vec<_>>() {
                    g.push((name.clone(), s));
                    out |= self.cmd(g, theta, body);
                    g.pop();
                }
                out
            }
            CmdKind::Call { target, app, fun, args } => {
                let callee = self.sys.lookup(app, fun).unwrap();
                let ft = self.sys.function(callee).declared_type().unwrap();
                let args_ok =
                    args.iter().zip(&ft.params).all(|(a, pt)| self.expr(g, a) >> self.index(&pt.project(theta)) & 1 == 1);
                let gx = self.lookup(g, target);
                if args_ok && ft.ret.project(theta).leq(self.sys.lattice(), &gx) {
                    self.down(&gx)
                } else {
                    0
                }
            }
            CmdKind::Test { perm, then, els } => {
                let p = self.sys.universe().perm(perm).unwrap();
                let mut up: Gamma = g.iter().map(|(x, t)| (x.clone(), t.promote(p))).collect();
                let mut down: Gamma = g.iter().map(|(x, t)| (x.clone(), t.demote(p))).collect();
                // Constants live in Γ too; they are permission-independent so promotion leaves them alone.
                let s1 = self.cmd(&mut up, theta, then);
                let s2 = self.cmd(&mut down, theta, els);
                let mut out = 0;
                for t1 in self.members(s1) {
                    for t2 in self.members(s2) {
                        out |= self.down(&BaseType::merge(p, t1, t2));
                    }
                }
                out
            }
        }
    }

    /// Whether `⊢ FD(id) : FT(id)` has a derivation.
    pub fn derivable(&self, id: FunId) -> bool {
        let f = self.sys.function(id);
        let ty = f.declared_type().expect("annotated");
        let mut g: Gamma = f.params.iter().cloned().zip(ty.params).collect();
        g.push((f.ret_var.clone(), ty.ret));
        self.cmd(&mut g, self.sys.theta(&f.app), &f.body) != 0
    }

    pub fn universe(&self) -> &[BaseType] {
        &self.all
    }
}
