#![allow(dead_code)]

use std::time::{Duration, Instant};

use reactordb_core::{
    build_strategy, Args, Database, Datum, DbOptions, ReactorType, Strategy, TableSchema, TxnError,
};

pub const BAL: &[u8] = b"b";
pub const INITIAL: i64 = 100;

fn balance(tx: &mut reactordb_core::Tx<'_>) -> Result<i64, TxnError> {
    Ok(tx.read_row::<i64>("bal", BAL)?.unwrap_or(0))
}

pub fn account_type() -> ReactorType {
    ReactorType::new("account")
        .table(TableSchema::new("bal", 1, &["amount"]))
        .table(TableSchema::new("log", 1, &["entry"]))
        .procedure("get", |tx, _| Ok(balance(tx)?.into()))
        .procedure("add", |tx, a| {
            let b = balance(tx)? + a.int(0)?;
            if b < 0 {
                return tx.abort("insufficient funds");
            }
            tx.write_row("bal", BAL, &b)?;
            Ok(b.into())
        })
        .procedure("slow_add", |tx, a| {
            let b = balance(tx)?;
            std::thread::sleep(Duration::from_micros(200));
            tx.write_row("bal", BAL, &(b + a.int(0)?))?;
            Ok(Datum::Unit)
        })
        .procedure("transfer", |tx, a| {
            let dest = tx.lookup(a.str(0)?)?;
            let amount = a.int(1)?;
            let me = tx.reactor_id();
            tx.call(me, "add", vec![(-amount).into()])?;
            let f = tx.call(dest, "add", vec![amount.into()])?;
            f.get(tx)
        })
        .procedure("fanout", |tx, a| {
            for name in a.list(0)? {
                let dest = tx.lookup(name.as_str()?)?;
                tx.call(dest, "add", vec![a.int(1)?.into()])?;
            }
            Ok(Datum::Unit)
        })
        .procedure("forward", |tx, a| {
            let dest = tx.lookup(a.str(0)?)?;
            let rest = a[2..].to_vec();
            let f = tx.call(dest, a.str(1)?, rest)?;
            f.get(tx)
        })
        .procedure("fail", |tx, _| tx.abort("requested failure"))
        .procedure("boom", |_, _| panic!("procedure panicked"))
        .procedure("fail_child", |tx, a| {
            let dest = tx.lookup(a.str(0)?)?;
            tx.write_row("bal", BAL, &-1i64)?;
            tx.call(dest, "fail", vec![])?;
            Ok(Datum::Unit)
        })
        .procedure("hold", |tx, _| {
            let deadline = Instant::now() + Duration::from_secs(5);
            while !tx.is_aborted() && Instant::now() < deadline {
                std::thread::sleep(Duration::from_millis(1));
            }
            Ok(Datum::Unit)
        })
        .procedure("diamond", |tx, a| {
            let (r2, r3) = (tx.lookup(a.str(0)?)?, tx.lookup(a.str(1)?)?);
            let target = a.str(2)?.to_string();
            let inner = a.str(3)?.to_string();
            let f2 = tx.call(r2, "forward", vec![target.clone().into(), inner.clone().into(), 0i64.into()])?;
            let f3 = tx.call(r3, "forward", vec![target.into(), inner.into(), 0i64.into()])?;
            f2.get(tx)?;
            f3.get(tx)
        })
        .procedure("sequential", |tx, a| {
            let (r2, r3) = (tx.lookup(a.str(0)?)?, tx.lookup(a.str(1)?)?);
            let target = a.str(2)?.to_string();
            let f2 = tx.call(r2, "forward", vec![target.clone().into(), "add".into(), 1i64.into()])?;
            f2.get(tx)?;
            let f3 = tx.call(r3, "forward", vec![target.into(), "add".into(), 1i64.into()])?;
            f3.get(tx)
        })
        .procedure("audit", |tx, a| {
            let mut total = 0;
            for name in a.list(0)? {
                let r = tx.lookup(name.as_str()?)?;
                let f = tx.call(r, "get", vec![])?;
                total += f.get(tx)?.as_int()?;
            }
            Ok(total.into())
        })
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("acct{i}")).collect()
}

pub fn accounts(n: usize, strategy: Strategy, executors: usize, opts: DbOptions) -> Database {
    let names = names(n);
    let plan = build_strategy(strategy, executors, &names);
    let decls: Vec<(String, String)> = names.iter().map(|n| (n.clone(), "account".into())).collect();
    let db = Database::instantiate(&decls, vec![account_type()], &plan, opts).expect("instantiate");
    for name in &names {
        let id = db.reactor_id(name).unwrap();
        db.load_row(id, "bal", BAL, &INITIAL).unwrap();
    }
    db
}

pub fn balance_of(db: &Database, name: &str) -> i64 {
    let id = db.reactor_id(name).unwrap();
    db.peek_row::<i64>(id, "bal", BAL).unwrap().unwrap_or(0)
}

pub fn total(db: &Database, n: usize) -> i64 {
    names(n).iter().map(|name| balance_of(db, name)).sum()
}
