//! TPC-C with each warehouse as a reactor. Every warehouse holds its own
//! copy of the item relation. Stock updates for items supplied by another
//! warehouse run as sub-transactions on that warehouse.
//!
//! Simplifications: no terminals, think or keying times; amounts are
//! integer cents and rates integer basis points; one district info string
//! per stock row; shortened filler columns; logical timestamps supplied by
//! the input generator.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reactordb_core::{Args, Database, Datum, KeyBuf, ReactorId, ReactorType, TableSchema, Tx, TxnError};
use serde::{Deserialize, Serialize};

use super::{reactor_ids, Generator, Mix, Request, Workload};
use crate::spec::{Formulation, WorkloadSpec};
use crate::spin;

pub const DISTRICTS: u8 = 10;
const INITIAL_W_YTD: i64 = 30_000_000;
const INITIAL_D_YTD: i64 = 3_000_000;
const SYLLABLES: [&str; 10] = ["BAR", "OUGHT", "ABLE", "PRI", "PRES", "ESE", "ANTI", "CALLY", "ATION", "EING"];

pub fn warehouse_name(w: u32) -> String {
    format!("wh{w}")
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Warehouse {
    pub name: String,
    pub tax_bp: i64,
    pub ytd: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct District {
    pub tax_bp: i64,
    pub ytd: i64,
    pub next_o_id: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Customer {
    pub first: String,
    pub last: String,
    pub credit: String,
    pub discount_bp: i64,
    pub balance: i64,
    pub ytd_payment: i64,
    pub payment_cnt: u32,
    pub delivery_cnt: u32,
    pub data: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct History {
    pub c_id: u32,
    pub c_d: u8,
    pub c_w: u32,
    pub d: u8,
    pub amount: i64,
    pub ts: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Order {
    pub c_id: u32,
    pub entry_ts: u64,
    pub carrier: Option<u8>,
    pub ol_cnt: u8,
    pub all_local: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OrderLine {
    pub i_id: u32,
    pub supply_w: u32,
    pub delivery_ts: Option<u64>,
    pub quantity: i64,
    pub amount: i64,
    pub dist_info: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Item {
    pub name: String,
    pub price: i64,
    pub data: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Stock {
    pub quantity: i64,
    pub ytd: i64,
    pub order_cnt: u32,
    pub remote_cnt: u32,
    pub dist_info: String,
}

fn k_d(d: u8) -> Vec<u8> {
    KeyBuf::new().u8(d).finish()
}

fn k_dc(d: u8, c: u32) -> Vec<u8> {
    KeyBuf::new().u8(d).u32(c).finish()
}

fn k_do(d: u8, o: u32) -> Vec<u8> {
    KeyBuf::new().u8(d).u32(o).finish()
}

fn k_dol(d: u8, o: u32, ol: u8) -> Vec<u8> {
    KeyBuf::new().u8(d).u32(o).u8(ol).finish()
}

fn k_dco(d: u8, c: u32, o: u32) -> Vec<u8> {
    KeyBuf::new().u8(d).u32(c).u32(o).finish()
}

fn k_name(d: u8, last: &str) -> Vec<u8> {
    KeyBuf::new().u8(d).str(last).finish()
}

fn k_i(i: u32) -> Vec<u8> {
    KeyBuf::new().u32(i).finish()
}

pub fn last_name(n: u32) -> String {
    let n = n % 1000;
    [n / 100, (n / 10) % 10, n % 10]
        .iter()
        .map(|&s| SYLLABLES[s as usize])
        .collect()
}

fn get<T: serde::de::DeserializeOwned>(tx: &mut Tx<'_>, table: &str, key: &[u8]) -> Result<T, TxnError> {
    match tx.read_row(table, key)? {
        Some(v) => Ok(v),
        None => tx.abort(format!("missing {table} row")),
    }
}

fn small(v: i64, what: &str) -> Result<u32, TxnError> {
    u32::try_from(v).map_err(|_| TxnError::BadArgument(format!("{what} {v} out of range")))
}

/// Customer by id, or by last name picking the middle match.
fn find_customer(tx: &mut Tx<'_>, d: u8, by: &Datum) -> Result<(u32, Customer), TxnError> {
    let c = match by {
        Datum::Str(last) => {
            let lo = k_name(d, last);
            let mut hi = lo.clone();
            *hi.last_mut().expect("terminated") = 1;
            let hits = tx.scan("customer_name", &lo, &hi, usize::MAX, false)?.entries;
            if hits.is_empty() {
                return tx.abort(format!("no customer named {last}"));
            }
            let k = &hits[(hits.len() - 1) / 2].0;
            reactordb_core::key::decode_u32(k, k.len() - 4)
        }
        other => small(other.as_int()?, "customer")?,
    };
    let row = get(tx, "customer", &k_dc(d, c))?;
    Ok((c, row))
}

fn update_stock(tx: &mut Tx<'_>, i: u32, qty: i64, remote: bool, delay_us: i64, seed: u64) -> Result<String, TxnError> {
    if delay_us > 0 {
        spin::burn_for(seed, delay_us as u64);
    }
    let mut s: Stock = get(tx, "stock", &k_i(i))?;
    s.quantity = if s.quantity >= qty + 10 { s.quantity - qty } else { s.quantity - qty + 91 };
    s.ytd += qty;
    s.order_cnt += 1;
    if remote {
        s.remote_cnt += 1;
    }
    tx.write_row("stock", &k_i(i), &s)?;
    Ok(s.dist_info)
}

/// One order line as passed between procedures: item, supplying warehouse,
/// quantity, spin delay in microseconds.
fn line(d: &Datum) -> Result<(u32, u32, i64, i64), TxnError> {
    let l = d.as_list()?;
    Ok((small(l.arg(0)?.as_int()?, "item")?, small(l.int(1)?, "warehouse")?, l.int(2)?, l.int(3)?))
}

fn new_order(tx: &mut Tx<'_>, a: &[Datum], asynchronous: bool) -> Result<Datum, TxnError> {
    let d = a.int(0)? as u8;
    let c = small(a.int(1)?, "customer")?;
    let lines = a.list(2)?.iter().map(line).collect::<Result<Vec<_>, _>>()?;
    let ts = a.int(3)? as u64;
    let home = tx.reactor_name().trim_start_matches("wh").parse::<u32>().unwrap_or(0);
    let all_local = lines.iter().all(|l| l.1 == home);

    let (o_id, w_tax, d_tax, discount) = tx.timed("head", |tx| {
        let w: Warehouse = get(tx, "warehouse", &k_d(0))?;
        let mut dist: District = get(tx, "district", &k_d(d))?;
        let o_id = dist.next_o_id;
        dist.next_o_id += 1;
        tx.write_row("district", &k_d(d), &dist)?;
        let cust: Customer = get(tx, "customer", &k_dc(d, c))?;
        let order = Order {
            c_id: c,
            entry_ts: ts,
            carrier: None,
            ol_cnt: lines.len() as u8,
            all_local,
        };
        tx.insert_row("oorder", &k_do(d, o_id), &order)?;
        tx.insert_row("new_order", &k_do(d, o_id), &())?;
        tx.insert_row("order_by_customer", &k_dco(d, c, o_id), &())?;
        Ok::<_, TxnError>((o_id, w.tax_bp, dist.tax_bp, cust.discount_bp))
    })?;

    let mut prices = Vec::with_capacity(lines.len());
    for &(i, ..) in &lines {
        match tx.read_row::<Item>("item", &k_i(i))? {
            Some(item) => prices.push(item.price),
            None => return tx.abort("item number is not valid"),
        }
    }

    // Remote stock updates, one sub-transaction per supplying warehouse.
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (n, l) in lines.iter().enumerate() {
        if l.1 != home {
            groups.entry(l.1).or_default().push(n);
        }
    }
    let mut dist_info = vec![String::new(); lines.len()];
    let mut pending = Vec::new();
    for (&w, idx) in &groups {
        let dest = tx.lookup(&warehouse_name(w))?;
        let args: Vec<Datum> = idx
            .iter()
            .map(|&n| {
                let (i, _, q, delay) = lines[n];
                Datum::List(vec![i.into(), q.into(), delay.into(), ((ts ^ n as u64) as i64).into()])
            })
            .collect();
        let f = tx.call(dest, "stock_update", vec![args.into()])?;
        if asynchronous {
            pending.push((f, idx));
        } else {
            let out = f.get(tx)?;
            for (&n, s) in idx.iter().zip(out.as_list()?) {
                dist_info[n] = s.as_str()?.to_string();
            }
        }
    }
    for (n, &(i, w, q, delay)) in lines.iter().enumerate() {
        if w == home {
            dist_info[n] = tx.timed("stock", |tx| update_stock(tx, i, q, false, delay, ts ^ n as u64))?;
        }
    }
    for (f, idx) in &pending {
        let out = f.get(tx)?;
        for (&n, s) in idx.iter().zip(out.as_list()?) {
            dist_info[n] = s.as_str()?.to_string();
        }
    }

    let mut total = 0;
    for (n, &(i, w, q, _)) in lines.iter().enumerate() {
        let amount = q * prices[n];
        total += amount;
        let ol = OrderLine {
            i_id: i,
            supply_w: w,
            delivery_ts: None,
            quantity: q,
            amount,
            dist_info: std::mem::take(&mut dist_info[n]),
        };
        tx.timed("line", |tx| tx.insert_row("order_line", &k_dol(d, o_id, n as u8 + 1), &ol))?;
    }
    let total = total * (10_000 - discount) / 10_000 * (10_000 + w_tax + d_tax) / 10_000;
    Ok(total.into())
}

fn stock_update(tx: &mut Tx<'_>, a: &[Datum]) -> Result<Datum, TxnError> {
    let mut out = Vec::new();
    for l in a.list(0)? {
        let l = l.as_list()?;
        let seed = l.int(3)? as u64;
        let info = tx.timed("remote_stock", |tx| {
            update_stock(tx, small(l.int(0)?, "item")?, l.int(1)?, true, l.int(2)?, seed)
        })?;
        out.push(Datum::Str(info));
    }
    Ok(out.into())
}

fn payment(tx: &mut Tx<'_>, a: &[Datum]) -> Result<Datum, TxnError> {
    let d = a.int(0)? as u8;
    let c_w = small(a.int(1)?, "warehouse")?;
    let c_d = a.int(2)? as u8;
    let by = a.arg(3)?.clone();
    let amount = a.int(4)?;
    let worker = small(a.int(5)?, "worker")?;
    let ts = a.int(6)? as u64;
    let mut w: Warehouse = get(tx, "warehouse", &k_d(0))?;
    w.ytd += amount;
    tx.write_row("warehouse", &k_d(0), &w)?;
    let mut dist: District = get(tx, "district", &k_d(d))?;
    dist.ytd += amount;
    tx.write_row("district", &k_d(d), &dist)?;
    let home = tx.reactor_name().trim_start_matches("wh").parse::<u32>().unwrap_or(0);
    let dest = tx.lookup(&warehouse_name(c_w))?;
    let f = tx.call(
        dest,
        "pay_customer",
        vec![(c_d as i64).into(), by, amount.into(), home.into(), (d as i64).into()],
    )?;
    let c_id = small(f.get(tx)?.as_int()?, "customer")?;
    let h = History {
        c_id,
        c_d,
        c_w,
        d,
        amount,
        ts,
    };
    tx.insert_row("history", &KeyBuf::new().u32(worker).u64(ts).finish(), &h)?;
    Ok(Datum::Unit)
}

fn pay_customer(tx: &mut Tx<'_>, a: &[Datum]) -> Result<Datum, TxnError> {
    let d = a.int(0)? as u8;
    let amount = a.int(2)?;
    let (c, mut cust) = find_customer(tx, d, a.arg(1)?)?;
    cust.balance -= amount;
    cust.ytd_payment += amount;
    cust.payment_cnt += 1;
    if cust.credit == "BC" {
        let mut data = format!("{c} {d} {} {} {amount}|{}", a.int(3)?, a.int(4)?, cust.data);
        data.truncate(100);
        cust.data = data;
    }
    tx.write_row("customer", &k_dc(d, c), &cust)?;
    Ok((c as i64).into())
}

fn order_status(tx: &mut Tx<'_>, a: &[Datum]) -> Result<Datum, TxnError> {
    let d = a.int(0)? as u8;
    let (c, cust) = find_customer(tx, d, a.arg(1)?)?;
    let last = tx.scan("order_by_customer", &k_dc(d, c), &k_dc(d, c + 1), 1, true)?.entries;
    let Some((k, _)) = last.first() else {
        return Ok(Datum::List(vec![cust.balance.into()]));
    };
    let o = reactordb_core::key::decode_u32(k, k.len() - 4);
    let order: Order = get(tx, "oorder", &k_do(d, o))?;
    let lines: Vec<(Vec<u8>, OrderLine)> = tx.scan_rows("order_line", &k_dol(d, o, 0), &k_dol(d, o + 1, 0), usize::MAX, false)?;
    let mut out = vec![cust.balance.into(), (o as i64).into(), (order.ol_cnt as i64).into()];
    out.extend(lines.iter().map(|(_, l)| Datum::from(l.amount)));
    Ok(out.into())
}

fn delivery(tx: &mut Tx<'_>, a: &[Datum]) -> Result<Datum, TxnError> {
    let carrier = a.int(0)? as u8;
    let ts = a.int(1)? as u64;
    let mut delivered = 0i64;
    for d in 1..=DISTRICTS {
        let oldest = tx.scan("new_order", &k_do(d, 0), &k_do(d + 1, 0), 1, false)?.entries;
        let Some((k, _)) = oldest.first() else { continue };
        let o = reactordb_core::key::decode_u32(k, 1);
        tx.delete("new_order", &k_do(d, o))?;
        let mut order: Order = get(tx, "oorder", &k_do(d, o))?;
        order.carrier = Some(carrier);
        tx.write_row("oorder", &k_do(d, o), &order)?;
        let lines: Vec<(Vec<u8>, OrderLine)> = tx.scan_rows("order_line", &k_dol(d, o, 0), &k_dol(d, o + 1, 0), usize::MAX, false)?;
        let mut sum = 0;
        for (k, mut l) in lines {
            sum += l.amount;
            l.delivery_ts = Some(ts);
            tx.write_row("order_line", &k, &l)?;
        }
        let mut cust: Customer = get(tx, "customer", &k_dc(d, order.c_id))?;
        cust.balance += sum;
        cust.delivery_cnt += 1;
        tx.write_row("customer", &k_dc(d, order.c_id), &cust)?;
        delivered += 1;
    }
    Ok(delivered.into())
}

fn stock_level(tx: &mut Tx<'_>, a: &[Datum]) -> Result<Datum, TxnError> {
    let d = a.int(0)? as u8;
    let threshold = a.int(1)?;
    let dist: District = get(tx, "district", &k_d(d))?;
    let lo = dist.next_o_id.saturating_sub(20);
    let lines: Vec<(Vec<u8>, OrderLine)> =
        tx.scan_rows("order_line", &k_dol(d, lo, 0), &k_dol(d, dist.next_o_id, 0), usize::MAX, false)?;
    let items: BTreeSet<u32> = lines.iter().map(|(_, l)| l.i_id).collect();
    let mut low = 0i64;
    for i in items {
        if let Some(s) = tx.read_row::<Stock>("stock", &k_i(i))? {
            if s.quantity < threshold {
                low += 1;
            }
        }
    }
    Ok(low.into())
}

/// The warehouse reactor type; `asynchronous` delays getting the results
/// of remote stock updates until all of them and the local ones were issued.
pub fn warehouse_type(asynchronous: bool) -> ReactorType {
    ReactorType::new("warehouse")
        .table(TableSchema::new("warehouse", 1, &["name", "tax", "ytd"]))
        .table(TableSchema::new("district", 1, &["tax", "ytd", "next_o_id"]))
        .table(TableSchema::new(
            "customer",
            2,
            &["first", "last", "credit", "discount", "balance", "ytd_payment", "payment_cnt", "delivery_cnt", "data"],
        ))
        .table(TableSchema::new("customer_name", 4, &[]))
        .table(TableSchema::new("history", 2, &["c_id", "c_d", "c_w", "d", "amount", "ts"]))
        .table(TableSchema::new("oorder", 2, &["c_id", "entry_ts", "carrier", "ol_cnt", "all_local"]))
        .table(TableSchema::new("order_by_customer", 3, &[]))
        .table(TableSchema::new("new_order", 2, &[]))
        .table(TableSchema::new(
            "order_line",
            3,
            &["i_id", "supply_w", "delivery_ts", "quantity", "amount", "dist_info"],
        ))
        .table(TableSchema::new("item", 1, &["name", "price", "data"]))
        .table(TableSchema::new("stock", 1, &["quantity", "ytd", "order_cnt", "remote_cnt", "dist_info"]))
        .procedure("new_order", move |tx, a| new_order(tx, a, asynchronous))
        .procedure("stock_update", stock_update)
        .procedure("payment", payment)
        .procedure("pay_customer", pay_customer)
        .procedure("order_status", order_status)
        .procedure("delivery", delivery)
        .procedure("stock_level", stock_level)
}

/// Non-uniform random number as defined by TPC-C.
pub fn nurand<R: Rng + ?Sized>(rng: &mut R, a: u32, c: u32, x: u32, y: u32) -> u32 {
    (((rng.gen_range(0..=a) | rng.gen_range(x..=y)) + c) % (y - x + 1)) + x
}

fn astring<R: Rng + ?Sized>(rng: &mut R, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
}

pub struct Tpcc {
    spec: WorkloadSpec,
}

impl Tpcc {
    pub fn new(spec: WorkloadSpec) -> Self {
        Tpcc { spec }
    }

    fn warehouses(&self) -> u32 {
        self.spec.scale_factor as u32
    }

    fn load_warehouse(&self, db: &Database, w: u32) -> Result<(), TxnError> {
        let pop = self.spec.tpcc;
        let r = db.reactor_id(&warehouse_name(w)).expect("declared");
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed ^ (w as u64) << 20);
        db.load_row(
            r,
            "warehouse",
            &k_d(0),
            &Warehouse {
                name: astring(&mut rng, 6, 10),
                tax_bp: rng.gen_range(0..=2000),
                ytd: INITIAL_W_YTD,
            },
        )?;
        for i in 1..=pop.items {
            let item = Item {
                name: astring(&mut rng, 14, 24),
                price: rng.gen_range(100..=10_000),
                data: astring(&mut rng, 8, 16),
            };
            db.load_row(r, "item", &k_i(i), &item)?;
            let stock = Stock {
                quantity: rng.gen_range(10..=100),
                ytd: 0,
                order_cnt: 0,
                remote_cnt: 0,
                dist_info: astring(&mut rng, 24, 24),
            };
            db.load_row(r, "stock", &k_i(i), &stock)?;
        }
        let customers = pop.customers_per_district;
        let orders = pop.orders_per_district;
        let undelivered_from = orders - orders * 3 / 10 + 1;
        for d in 1..=DISTRICTS {
            db.load_row(
                r,
                "district",
                &k_d(d),
                &District {
                    tax_bp: rng.gen_range(0..=2000),
                    ytd: INITIAL_D_YTD,
                    next_o_id: orders + 1,
                },
            )?;
            for c in 1..=customers {
                let last = last_name(if c <= 1000 { c - 1 } else { nurand(&mut rng, 255, 157, 0, 999) });
                let cust = Customer {
                    first: astring(&mut rng, 8, 16),
                    last: last.clone(),
                    credit: if rng.gen_bool(0.1) { "BC" } else { "GC" }.to_string(),
                    discount_bp: rng.gen_range(0..=5000),
                    balance: -1000,
                    ytd_payment: 1000,
                    payment_cnt: 1,
                    delivery_cnt: 0,
                    data: astring(&mut rng, 30, 50),
                };
                db.load_row(r, "customer", &k_dc(d, c), &cust)?;
                let nk = KeyBuf::new().u8(d).str(&last).str(&cust.first).u32(c).finish();
                db.load_row(r, "customer_name", &nk, &())?;
                db.load_row(
                    r,
                    "history",
                    &KeyBuf::new().u32(u32::MAX).u64(((d as u64) << 32) | c as u64).finish(),
                    &History {
                        c_id: c,
                        c_d: d,
                        c_w: w,
                        d,
                        amount: 1000,
                        ts: 0,
                    },
                )?;
            }
            let mut perm: Vec<u32> = (1..=customers).collect();
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            for o in 1..=orders {
                let c = perm[(o - 1) as usize % perm.len()];
                let delivered = o < undelivered_from;
                let ol_cnt = rng.gen_range(5..=15u8);
                db.load_row(
                    r,
                    "oorder",
                    &k_do(d, o),
                    &Order {
                        c_id: c,
                        entry_ts: 0,
                        carrier: delivered.then(|| rng.gen_range(1..=10)),
                        ol_cnt,
                        all_local: true,
                    },
                )?;
                db.load_row(r, "order_by_customer", &k_dco(d, c, o), &())?;
                if !delivered {
                    db.load_row(r, "new_order", &k_do(d, o), &())?;
                }
                for ol in 1..=ol_cnt {
                    let line = OrderLine {
                        i_id: rng.gen_range(1..=pop.items),
                        supply_w: w,
                        delivery_ts: delivered.then_some(0),
                        quantity: 5,
                        amount: if delivered { 0 } else { rng.gen_range(1..=999_999) },
                        dist_info: astring(&mut rng, 24, 24),
                    };
                    db.load_row(r, "order_line", &k_dol(d, o, ol), &line)?;
                }
            }
        }
        Ok(())
    }
}

fn rows<'a>(
    state: &'a reactordb_core::LogicalState,
    reactor: &str,
    table: &str,
) -> impl Iterator<Item = &'a (Vec<u8>, reactordb_core::Value)> {
    state
        .get(&(reactor.to_string(), table.to_string()))
        .into_iter()
        .flatten()
}

fn decode<T: serde::de::DeserializeOwned>(v: &[u8]) -> T {
    bincode::deserialize(v).expect("row decodes")
}

/// TPC-C consistency conditions 1 to 4 over a committed state.
pub fn check_state(state: &reactordb_core::LogicalState, warehouses: u32) -> Result<(), String> {
    for w in 1..=warehouses {
        let name = warehouse_name(w);
        let wh: Warehouse = decode(&rows(state, &name, "warehouse").next().ok_or("no warehouse row")?.1);
        let mut d_ytd = 0;
        let mut next = BTreeMap::new();
        for (k, v) in rows(state, &name, "district") {
            let d: District = decode(v);
            d_ytd += d.ytd;
            next.insert(k[0], d.next_o_id);
        }
        if wh.ytd != d_ytd {
            return Err(format!("{name}: W_YTD {} but districts sum to {d_ytd}", wh.ytd));
        }
        let mut max_o: BTreeMap<u8, u32> = BTreeMap::new();
        let mut ol_cnt: BTreeMap<u8, u64> = BTreeMap::new();
        for (k, v) in rows(state, &name, "oorder") {
            let d = k[0];
            let o = reactordb_core::key::decode_u32(k, 1);
            let order: Order = decode(v);
            let m = max_o.entry(d).or_default();
            *m = (*m).max(o);
            *ol_cnt.entry(d).or_default() += order.ol_cnt as u64;
        }
        let mut no: BTreeMap<u8, Vec<u32>> = BTreeMap::new();
        for (k, _) in rows(state, &name, "new_order") {
            no.entry(k[0]).or_default().push(reactordb_core::key::decode_u32(k, 1));
        }
        let mut lines: BTreeMap<u8, u64> = BTreeMap::new();
        for (k, _) in rows(state, &name, "order_line") {
            *lines.entry(k[0]).or_default() += 1;
        }
        for (&d, &n) in &next {
            let mo = max_o.get(&d).copied().unwrap_or(0);
            if n - 1 != mo {
                return Err(format!("{name} district {d}: next order id {n} but max order id {mo}"));
            }
            if let Some(ids) = no.get(&d) {
                let (lo, hi) = (ids[0], *ids.last().expect("nonempty"));
                if hi != mo {
                    return Err(format!("{name} district {d}: max new-order {hi}, max order {mo}"));
                }
                if (hi - lo + 1) as usize != ids.len() {
                    return Err(format!("{name} district {d}: {} new-orders span {lo}..={hi}", ids.len()));
                }
            }
            let (a, b) = (ol_cnt.get(&d).copied().unwrap_or(0), lines.get(&d).copied().unwrap_or(0));
            if a != b {
                return Err(format!("{name} district {d}: order line counts sum to {a}, {b} lines present"));
            }
        }
    }
    Ok(())
}

impl Workload for Tpcc {
    fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    fn reactors(&self) -> Vec<(String, String)> {
        (1..=self.warehouses())
            .map(|w| (warehouse_name(w), "warehouse".to_string()))
            .collect()
    }

    fn types(&self) -> Vec<ReactorType> {
        vec![warehouse_type(self.spec.formulation != Formulation::Sync)]
    }

    fn load(&self, db: &Database) -> Result<(), TxnError> {
        for w in 1..=self.warehouses() {
            self.load_warehouse(db, w)?;
        }
        Ok(())
    }

    fn generator(&self, db: &Database, worker: usize) -> Box<dyn Generator> {
        let n = self.warehouses();
        Box::new(TpccGen {
            rng: ChaCha8Rng::seed_from_u64(self.spec.seed ^ (worker as u64).wrapping_mul(0x9e37_79b9)),
            mix: Mix::new(&self.spec),
            ids: reactor_ids(db, (1..=n).map(warehouse_name)),
            home: (worker as u32 % n) + 1,
            warehouses: n,
            worker: worker as u32,
            seq: 0,
            spec: self.spec.clone(),
        })
    }

    fn check(&self, db: &Database) -> Result<(), String> {
        check_state(&db.logical_state(), self.warehouses())
    }
}

pub struct TpccGen {
    rng: ChaCha8Rng,
    mix: Mix,
    ids: Vec<ReactorId>,
    home: u32,
    warehouses: u32,
    worker: u32,
    seq: u64,
    spec: WorkloadSpec,
}

impl TpccGen {
    fn other_warehouse(&mut self) -> u32 {
        if self.warehouses == 1 {
            return self.home;
        }
        let w = self.rng.gen_range(1..self.warehouses);
        if w >= self.home {
            w + 1
        } else {
            w
        }
    }

    fn customer_ref(&mut self) -> Datum {
        let customers = self.spec.tpcc.customers_per_district;
        let c = nurand(&mut self.rng, 1023, 259, 1, customers);
        if self.rng.gen_range(0..100) < 60 {
            Datum::Str(last_name(c - 1))
        } else {
            (c as i64).into()
        }
    }

    /// New-order lines as [item, supplying warehouse, quantity, delay].
    pub fn order_lines(&mut self) -> Vec<Datum> {
        let items = self.spec.tpcc.items;
        let (count, rollback) = match self.spec.new_order_shape {
            Some((local, remote)) => (local + remote, false),
            None => (self.rng.gen_range(5..=15), self.rng.gen_range(0..100) == 0),
        };
        let remote_pct = self.spec.remote_pct.unwrap_or(1.0);
        let mut chosen = BTreeSet::new();
        let mut out = Vec::with_capacity(count);
        for n in 0..count {
            let mut i = nurand(&mut self.rng, 8191, 7911, 1, items);
            while !chosen.insert(i) {
                i = nurand(&mut self.rng, 8191, 7911, 1, items);
            }
            if rollback && n == count - 1 {
                i = items + 1;
            }
            let remote = match self.spec.new_order_shape {
                Some((local, _)) => n >= local,
                None => self.rng.gen_bool(remote_pct / 100.0),
            };
            let supply = if remote { self.other_warehouse() } else { self.home };
            let delay = match self.spec.delay_us {
                Some((lo, hi)) => self.rng.gen_range(lo..=hi) as i64,
                None => 0,
            };
            out.push(Datum::List(vec![i.into(), supply.into(), self.rng.gen_range(1..=10i64).into(), delay.into()]));
        }
        out
    }
}

impl Generator for TpccGen {
    fn next(&mut self) -> Request {
        self.seq += 1;
        let ts = ((self.worker as i64) << 40) | self.seq as i64;
        let kind = self.mix.pick(&mut self.rng);
        let d = self.rng.gen_range(1..=DISTRICTS as i64);
        let (procedure, args) = match kind {
            0 => {
                let c = nurand(&mut self.rng, 1023, 259, 1, self.spec.tpcc.customers_per_district);
                let lines = self.order_lines();
                ("new_order", vec![d.into(), (c as i64).into(), lines.into(), ts.into()])
            }
            1 => {
                let remote = self.rng.gen_bool(self.spec.remote_customer_pct / 100.0);
                let (c_w, c_d) = if remote && self.warehouses > 1 {
                    (self.other_warehouse(), self.rng.gen_range(1..=DISTRICTS as i64))
                } else {
                    (self.home, d)
                };
                let amount = self.rng.gen_range(100..=500_000i64);
                let by = self.customer_ref();
                (
                    "payment",
                    vec![d.into(), c_w.into(), c_d.into(), by, amount.into(), self.worker.into(), ts.into()],
                )
            }
            2 => ("order_status", vec![d.into(), self.customer_ref()]),
            3 => ("delivery", vec![self.rng.gen_range(1..=10i64).into(), ts.into()]),
            _ => ("stock_level", vec![d.into(), self.rng.gen_range(10..=20i64).into()]),
        };
        Request {
            reactor: self.ids[(self.home - 1) as usize],
            procedure,
            args,
            kind,
        }
    }
}
