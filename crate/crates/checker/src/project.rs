use crate::history::{History, Item, Model, TraceOp};
use crate::CheckError;

/// Separator placed between reactor name and table in projected item names.
pub const CONCAT: char = '∘';

pub(crate) fn qualified(reactor: &str, item: &Item) -> Item {
    Item {
        table: format!("{reactor}{CONCAT}{}", item.table),
        key: item.key.clone(),
    }
}

/// Projects a reactor-model history onto the classic model.
///
/// Every basic operation `r_{i,j}^k[x]` becomes `r_i[k∘x]`; sub-transaction
/// identities are dropped. The total order of the trace already respects the
/// nesting order of sub-transactions, so operations keep their positions.
pub fn project(h: &History) -> Result<History, CheckError> {
    if h.model != Model::Reactor {
        return Err(CheckError::Malformed(
            "projection expects a reactor-model history".into(),
        ));
    }
    h.validate()?;
    let ops = h
        .ops
        .iter()
        .map(|op| match (&op.item, &op.reactor) {
            (Some(item), Some(reactor)) => TraceOp {
                seq: op.seq,
                kind: op.kind,
                txn: op.txn,
                subtxn: None,
                reactor: None,
                item: Some(qualified(reactor, item)),
            },
            _ => op.clone(),
        })
        .collect();
    Ok(History {
        ops,
        model: Model::Classic,
        parents: Default::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::OpKind;

    #[test]
    fn read_on_reactor_becomes_qualified_read() {
        let h = History::reactor(vec![
            TraceOp::access(1, OpKind::Read, 1, 0, "5", Item::new("t", "x")),
            TraceOp::terminal(2, 1, true),
        ]);
        let p = project(&h).unwrap();
        assert_eq!(p.model, Model::Classic);
        assert_eq!(p.ops[0].item, Some(Item::new("5∘t", "x")));
        assert_eq!(p.ops[0].reactor, None);
        assert_eq!(p.ops[1], h.ops[1]);
    }

    #[test]
    fn empty_history_projects_to_empty() {
        let p = project(&History::reactor(vec![])).unwrap();
        assert!(p.ops.is_empty());
    }

    #[test]
    fn classic_input_is_rejected() {
        assert!(project(&History::new(Model::Classic)).is_err());
    }
}
