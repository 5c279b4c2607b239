use std::collections::HashMap;

use evalexpr::{build_operator_tree, ContextWithMutableVariables, HashMapContext, Node, Value as ExprValue};
use serde::Deserialize;

use super::WorkloadError;

/// Symbols a template expression may reference.
pub const SYMBOLS: &[&str] = &["B", "S", "D", "H", "ffn", "dp", "sp", "tp", "pp", "b", "bpp", "Sq", "Skv"];

#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    tree: Node,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr, WorkloadError> {
        let tree = build_operator_tree(source)
            .map_err(|e| WorkloadError::Template(format!("expression `{source}`: {e}")))?;
        for ident in tree.iter_variable_identifiers() {
            if !SYMBOLS.contains(&ident) {
                return Err(WorkloadError::Template(format!("expression `{source}` uses unknown symbol `{ident}`")));
            }
        }
        Ok(Expr { source: source.to_string(), tree })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, env: &Env) -> Result<f64, WorkloadError> {
        self.tree
            .eval_number_with_context(&env.ctx)
            .map_err(|e| WorkloadError::Template(format!("evaluating `{}`: {e}", self.source)))
    }
}

/// Numeric bindings for the template symbols.
pub struct Env {
    ctx: HashMapContext,
}

impl Env {
    pub fn new(bindings: &HashMap<&str, f64>) -> Env {
        let mut ctx = HashMapContext::new();
        for (k, v) in bindings {
            // set_value only fails on type changes, which cannot happen on a fresh context
            let _ = ctx.set_value((*k).to_string(), ExprValue::Float(*v));
        }
        Env { ctx }
    }
}

#[derive(Debug, Clone)]
pub enum TemplateOpKind {
    Gemm { m: Expr, k: Expr, n: Expr },
    Elementwise { flops: Expr, bytes: Expr },
    TpSync { bytes: Expr },
}

#[derive(Debug, Clone)]
pub struct TemplateOp {
    pub name: String,
    pub kind: TemplateOpKind,
}

#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum RawOp {
    Gemm { name: String, m: String, k: String, n: String },
    Elementwise { name: String, flops: String, bytes: String },
    TpSync { name: String, bytes: String },
}

/// Ordered op list for one transformer layer's forward pass.
#[derive(Debug, Clone)]
pub struct LayerTemplate {
    pub ops: Vec<TemplateOp>,
}

impl LayerTemplate {
    pub fn parse(text: &str) -> Result<LayerTemplate, WorkloadError> {
        let raw: Vec<RawOp> =
            serde_json::from_str(text).map_err(|e| WorkloadError::Template(format!("layer template: {e}")))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: Vec<RawOp>) -> Result<LayerTemplate, WorkloadError> {
        if raw.is_empty() {
            return Err(WorkloadError::Template("layer template has no ops".into()));
        }
        let ops = raw
            .into_iter()
            .map(|r| {
                Ok(match r {
                    RawOp::Gemm { name, m, k, n } => TemplateOp {
                        name,
                        kind: TemplateOpKind::Gemm { m: Expr::parse(&m)?, k: Expr::parse(&k)?, n: Expr::parse(&n)? },
                    },
                    RawOp::Elementwise { name, flops, bytes } => TemplateOp {
                        name,
                        kind: TemplateOpKind::Elementwise { flops: Expr::parse(&flops)?, bytes: Expr::parse(&bytes)? },
                    },
                    RawOp::TpSync { name, bytes } => {
                        TemplateOp { name, kind: TemplateOpKind::TpSync { bytes: Expr::parse(&bytes)? } }
                    }
                })
            })
            .collect::<Result<Vec<_>, WorkloadError>>()?;
        Ok(LayerTemplate { ops })
    }

    pub fn from_file(path: &std::path::Path) -> Result<LayerTemplate, WorkloadError> {
        let text = std::fs::read_to_string(path).map_err(|e| WorkloadError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The shipped Megatron-style transformer block.
    pub fn transformer() -> LayerTemplate {
        Self::parse(include_str!("../../fixtures/models/transformer_layer.json"))
            .expect("embedded layer template is valid")
    }
}
