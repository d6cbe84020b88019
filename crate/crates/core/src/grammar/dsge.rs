use std::convert::Infallible;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Grammar, ParseError, Symbol};
use crate::expr::{parse_expr, Expr};

/// Largest codon value; genes are drawn uniformly from `0..=CODON_MAX`.
pub const CODON_MAX: u32 = 255;

/// Per-nonterminal gene lists, indexed like `Grammar::rules`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Genotype {
    pub genes: Vec<Vec<u32>>,
}

impl Genotype {
    pub fn empty(grammar: &Grammar) -> Self {
        Genotype {
            genes: vec![Vec::new(); grammar.nonterminal_count()],
        }
    }

    pub fn gene_count(&self) -> usize {
        self.genes.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    /// Nesting level of a recursive rule at which only non-recursive
    /// alternatives are allowed.
    pub max_depth: usize,
    /// Lists shorter than this are padded with random genes after the
    /// initial derivation.
    pub initial_list_len: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_depth: 6,
            initial_list_len: 0,
        }
    }
}

/// One nonterminal expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub rule: usize,
    /// Position of the consumed gene in `genes[rule]`.
    pub gene_index: usize,
    pub gene: u32,
    pub choice: usize,
    /// The depth limit overrode the gene. At the limit a recursive rule
    /// always takes its first non-recursive alternative.
    pub forced: bool,
    /// Number of enclosing expansions of the same rule.
    pub level: usize,
    /// Index of the first output token produced by this expansion.
    pub token_start: usize,
}

#[derive(Debug, Clone)]
pub struct Derivation {
    pub trace: Vec<TraceStep>,
    pub tokens: Vec<String>,
    pub expr: Expr,
}

impl Derivation {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Maps genotypes to phenotypes under a fixed grammar and depth limit.
#[derive(Debug, Clone, Copy)]
pub struct Decoder<'g> {
    grammar: &'g Grammar,
    max_depth: usize,
    constant_rule: Option<usize>,
}

struct Exhausted;

impl<'g> Decoder<'g> {
    pub fn new(grammar: &'g Grammar, max_depth: usize) -> Self {
        Decoder {
            grammar,
            max_depth,
            constant_rule: grammar.index_of("cte"),
        }
    }

    pub fn grammar(&self) -> &'g Grammar {
        self.grammar
    }

    /// Decodes `genotype`, appending random genes to any list that runs out.
    /// The shipped grammar always yields a parseable expression; an error
    /// means a custom grammar produced text outside the expression language.
    pub fn decode<R: Rng + ?Sized>(&self, genotype: &mut Genotype, rng: &mut R) -> Result<Derivation, ParseError> {
        let mut run = Run::new(genotype, |_| Ok::<u32, Infallible>(rng.random_range(0..=CODON_MAX)));
        match self.expand(self.grammar.start(), &mut run) {
            Ok(()) => run.finish(),
            Err(never) => match never {},
        }
    }

    /// Decodes without extending lists; `None` if some list is too short.
    pub fn decode_exact(&self, genotype: &Genotype) -> Option<Result<Derivation, ParseError>> {
        let mut scratch = genotype.clone();
        let mut run = Run::new(&mut scratch, |_| -> Result<u32, Exhausted> { Err(Exhausted) });
        match self.expand(self.grammar.start(), &mut run) {
            Ok(()) => Some(run.finish()),
            Err(Exhausted) => None,
        }
    }

    fn expand<F, E>(&self, rule: usize, run: &mut Run<'_, F>) -> Result<(), E>
    where
        F: FnMut(usize) -> Result<u32, E>,
    {
        let grammar = self.grammar;
        let cursor = run.cursors[rule];
        if cursor == run.genotype.genes[rule].len() {
            let gene = (run.draw)(rule)?;
            run.genotype.genes[rule].push(gene);
        }
        let gene = run.genotype.genes[rule][cursor];
        run.cursors[rule] += 1;

        let alternatives = &grammar.rule(rule).alternatives;
        let level = run.levels[rule];
        let mut choice = gene as usize % alternatives.len();
        let mut forced = false;
        if level >= self.max_depth && grammar.is_recursive_rule(rule) {
            let exit = grammar
                .first_non_recursive(rule)
                .expect("validated when the grammar was parsed");
            forced = exit != choice;
            choice = exit;
        }
        let token_start = run.tokens.len();
        run.trace.push(TraceStep {
            rule,
            gene_index: cursor,
            gene,
            choice,
            forced,
            level,
            token_start,
        });

        run.levels[rule] += 1;
        for symbol in &alternatives[choice] {
            match symbol {
                Symbol::Terminal(t) => run.tokens.push(t.clone()),
                Symbol::NonTerminal(n) => self.expand(*n, run)?,
            }
        }
        run.levels[rule] -= 1;

        if Some(rule) == self.constant_rule {
            fold_constant(&mut run.tokens, token_start);
        }
        Ok(())
    }
}

struct Run<'a, F> {
    genotype: &'a mut Genotype,
    cursors: Vec<usize>,
    levels: Vec<usize>,
    trace: Vec<TraceStep>,
    tokens: Vec<String>,
    draw: F,
}

impl<'a, F> Run<'a, F> {
    fn new(genotype: &'a mut Genotype, draw: F) -> Self {
        let n = genotype.genes.len();
        Run {
            genotype,
            cursors: vec![0; n],
            levels: vec![0; n],
            trace: Vec::new(),
            tokens: Vec::new(),
            draw,
        }
    }

    fn finish(self) -> Result<Derivation, ParseError> {
        let expr = parse_expr(&self.tokens.join(" "))?;
        Ok(Derivation {
            trace: self.trace,
            tokens: self.tokens,
            expr,
        })
    }
}

/// Replaces the tokens of a constant subtree by a single numeric literal.
/// `b * pow(10, k)` is computed as `b / 10^-k` for negative `k` so that
/// values such as 3.6 come out exact.
fn fold_constant(tokens: &mut Vec<String>, start: usize) {
    let text = tokens[start..].join(" ");
    let Ok(parsed) = parse_expr(&text) else {
        return;
    };
    let value = match &parsed {
        Expr::Mul(a, b) => match (a.as_ref(), b.as_ref()) {
            (Expr::Const(base), Expr::Pow(ten, k)) if matches!(ten.as_ref(), Expr::Const(t) if *t == 10.0) => {
                let scale = 10f64.powi(k.abs());
                if *k < 0 {
                    base / scale
                } else {
                    base * scale
                }
            }
            _ => return,
        },
        _ => return,
    };
    tokens.truncate(start);
    tokens.push(format!("{value}"));
}

/// Draws a genotype by a random derivation under `limits`, so every gene
/// it contains is used and decoding respects the depth limit.
pub fn random_genotype<R: Rng + ?Sized>(grammar: &Grammar, rng: &mut R, limits: Limits) -> Genotype {
    let mut genotype = Genotype::empty(grammar);
    let decoder = Decoder::new(grammar, limits.max_depth);
    // Custom grammars may fail to produce parseable text; the genes are
    // still valid and selection will discard the individual.
    let _ = decoder.decode(&mut genotype, rng);
    for list in &mut genotype.genes {
        while list.len() < limits.initial_list_len {
            list.push(rng.random_range(0..=CODON_MAX));
        }
    }
    genotype
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::variable::VariableId::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn var_index(g: &Grammar, text: &str) -> u32 {
        let var = g.index_of("var").unwrap();
        g.rule(var)
            .alternatives
            .iter()
            .position(|alt| alt == &vec![Symbol::Terminal(text.into())])
            .unwrap() as u32
    }

    fn genotype(g: &Grammar, lists: &[(&str, Vec<u32>)]) -> Genotype {
        let mut out = Genotype::empty(g);
        for (name, genes) in lists {
            out.genes[g.index_of(name).unwrap()] = genes.clone();
        }
        out
    }

    #[test]
    fn bare_variable() {
        let g = Grammar::default_grammar();
        let geno = genotype(&g, &[("func", vec![0]), ("expr", vec![2]), ("var", vec![0])]);
        let d = Decoder::new(&g, 6).decode_exact(&geno).unwrap().unwrap();
        assert_eq!(d.text(), "G + B_I");
        assert_eq!(d.expr, Expr::add(Expr::var(G), Expr::var(BasalInsulin)));
    }

    #[test]
    fn negated_cross_product() {
        let g = Grammar::default_grammar();
        let v = var_index(&g, "F_ch*HR");
        let geno = genotype(&g, &[("func", vec![0]), ("expr", vec![3]), ("var", vec![v])]);
        let d = Decoder::new(&g, 6).decode_exact(&geno).unwrap().unwrap();
        let expected = Expr::add(Expr::var(G), Expr::neg(Expr::product(Carbs, HeartRate)));
        assert_eq!(d.expr, expected);
        assert_eq!(d.expr.canonical(), "G(t_n) - F_ch(t_n)*HR(t_n)");
    }

    #[test]
    fn genes_are_taken_modulo() {
        let g = Grammar::default_grammar();
        let geno = genotype(
            &g,
            &[
                ("func", vec![255]),
                ("expr", vec![2 + 6 * 40]),
                ("var", vec![34 * 7 + 5]),
            ],
        );
        let d = Decoder::new(&g, 6).decode_exact(&geno).unwrap().unwrap();
        assert_eq!(d.text(), "G + S");
    }

    #[test]
    fn constants_fold_exactly() {
        let g = Grammar::default_grammar();
        // (<cte> <op> <var> <op> <expr>) with 36*10^-1, *, HR, +, F_ch
        let geno = genotype(
            &g,
            &[
                ("func", vec![0]),
                ("expr", vec![1, 2]),
                ("cte", vec![0]),
                ("base", vec![35]),
                ("sign", vec![1]),
                ("exponent", vec![0]),
                ("op", vec![2, 0]),
                ("var", vec![3, 2]),
            ],
        );
        let d = Decoder::new(&g, 6).decode_exact(&geno).unwrap().unwrap();
        assert_eq!(d.text(), "G + ( 3.6 * HR + F_ch )");
        let env = [150.0, 1.0, 1.0, 0.5, 80.0, 1.0, 1.0];
        assert_eq!(d.expr.eval(&env).unwrap(), 150.0 + 3.6 * 80.0 + 0.5);
    }

    #[test]
    fn pow_alternative() {
        let g = Grammar::default_grammar();
        let geno = genotype(
            &g,
            &[
                ("func", vec![0]),
                ("expr", vec![5]),
                ("var", vec![var_index(&g, "G*B_I")]),
                ("sign", vec![1]),
                ("exponent", vec![1]),
            ],
        );
        let d = Decoder::new(&g, 6).decode_exact(&geno).unwrap().unwrap();
        assert_eq!(
            d.expr,
            Expr::add(Expr::var(G), Expr::neg(Expr::pow(Expr::product(G, BasalInsulin), -2)))
        );
    }

    #[test]
    fn depth_zero_forces_a_single_variable() {
        let g = Grammar::default_grammar();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let decoder = Decoder::new(&g, 0);
        for _ in 0..200 {
            let mut geno = random_genotype(
                &g,
                &mut rng,
                Limits {
                    max_depth: 6,
                    initial_list_len: 0,
                },
            );
            let d = decoder.decode(&mut geno, &mut rng).unwrap();
            let inc = d.expr.fde_increment().unwrap();
            let mut vars = 0;
            inc.for_each_var(&mut |_| vars += 1);
            assert!(matches!(inc, Expr::Var(_) | Expr::Mul(_, _)), "{}", d.text());
            assert!((1..=2).contains(&vars));
            assert!(!d.text().contains('('), "{}", d.text());
        }
    }

    #[test]
    fn forced_choice_still_consumes_the_gene() {
        let g = Grammar::default_grammar();
        let geno = genotype(&g, &[("func", vec![0]), ("expr", vec![0]), ("var", vec![1])]);
        let d = Decoder::new(&g, 0).decode_exact(&geno).unwrap().unwrap();
        assert_eq!(d.text(), "G + I_B");
        let expr_step = d.trace.iter().find(|s| s.rule == 1).unwrap();
        assert!(expr_step.forced);
        assert_eq!(expr_step.gene, 0);
    }

    #[test]
    fn extension_is_recorded_and_replays() {
        let g = Grammar::default_grammar();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut geno = Genotype::empty(&g);
        let first = Decoder::new(&g, 6).decode(&mut geno, &mut rng).unwrap();
        assert_eq!(geno.gene_count(), first.trace.len());
        let again = Decoder::new(&g, 6).decode_exact(&geno).unwrap().unwrap();
        assert_eq!(first.text(), again.text());
        assert_eq!(first.trace, again.trace);
    }

    #[test]
    fn short_lists_are_reported_by_exact_decode() {
        let g = Grammar::default_grammar();
        let geno = genotype(&g, &[("func", vec![0]), ("expr", vec![2])]);
        assert!(Decoder::new(&g, 6).decode_exact(&geno).is_none());
    }

    #[test]
    fn random_genotypes_are_reproducible_and_varied() {
        let g = Grammar::default_grammar();
        let limits = Limits::default();
        let a = random_genotype(&g, &mut ChaCha8Rng::seed_from_u64(11), limits);
        let b = random_genotype(&g, &mut ChaCha8Rng::seed_from_u64(11), limits);
        assert_eq!(a, b);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let decoder = Decoder::new(&g, limits.max_depth);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..1000 {
            let geno = random_genotype(&g, &mut rng, limits);
            let d = decoder.decode_exact(&geno).unwrap().unwrap();
            assert!(d.expr.is_fde_form());
            assert!(d.trace.iter().all(|s| s.level <= limits.max_depth));
            seen.insert(d.text());
        }
        assert!(seen.len() >= 2);
    }

    #[test]
    fn padding_respects_initial_length() {
        let g = Grammar::default_grammar();
        let limits = Limits {
            max_depth: 6,
            initial_list_len: 5,
        };
        let geno = random_genotype(&g, &mut ChaCha8Rng::seed_from_u64(1), limits);
        assert!(geno.genes.iter().all(|l| l.len() >= 5));
        assert!(geno.genes.iter().flatten().all(|&c| c <= CODON_MAX));
    }
}
