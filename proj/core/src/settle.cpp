#include <set>
#include <sstream>

#include "spon/payment.hpp"

namespace spon::payment {

std::string SettleReport::describe() const {
    std::ostringstream os;
    os << (ok ? "settle: OK" : "settle: FAILED") << '\n';
    for (const auto& [key, d] : connector_deltas)
        os << "  " << key.first << " on " << key.second << ": actual " << d.first << ", expected " << d.second << '\n';
    for (const auto& p : problems) os << "  ! " << p << '\n';
    return os.str();
}

SettleReport settle_check(const std::vector<Ledger*>& ledgers, const std::vector<const Connector*>& connectors,
                          double at_ms) {
    SettleReport rep;
    auto fail = [&](std::string msg) {
        rep.ok = false;
        rep.problems.push_back(std::move(msg));
    };

    for (Ledger* l : ledgers) {
        l->expire(at_ms);
        if (l->total() != l->minted())
            fail(l->id() + ": total " + std::to_string(l->total()) + " != minted " + std::to_string(l->minted()));
        if (auto n = l->active_holds()) fail(l->id() + ": " + std::to_string(n) + " holds still active");
        for (const auto& [acct, bal] : l->balances())
            if (bal < 0) fail(l->id() + ": negative balance for " + acct);
    }

    for (const Connector* c : connectors) {
        const auto& peers = c->peers();
        std::map<const Ledger*, Amount> expected;
        std::map<const Ledger*, std::string> own;
        for (const auto& [name, pa] : peers) {
            expected[pa.ledger];
            own[pa.ledger] = pa.own_account;
        }
        std::set<std::tuple<std::string, std::uint64_t, std::uint32_t>> paid;
        for (const auto& r : c->records()) {
            const auto& in = peers.at(r.in_peer);
            const auto& out = peers.at(r.out_peer);
            const Hold& h = in.ledger->hold_info(r.in_hold);
            if (h.status == HoldStatus::Executed) {
                expected[in.ledger] += r.in_amount;
                if (r.status != ForwardStatus::Fulfilled)
                    fail(c->config().address + ": hold executed without fulfillment for " +
                         std::to_string(r.payment_id) + ":" + std::to_string(r.seq));
                auto want = c->forward_amount(r.in_amount, in.ledger->currency(), out.ledger->currency());
                if (!want || *want != r.out_amount)
                    fail(c->config().address + ": forwarded " + std::to_string(r.out_amount) + " for incoming " +
                         std::to_string(r.in_amount) + " outside the fee schedule");
            }
            if ((r.status == ForwardStatus::Fulfilled || r.status == ForwardStatus::Mismatch) &&
                paid.emplace(r.out_peer, r.payment_id, r.seq).second)
                expected[out.ledger] -= r.out_amount;
        }
        for (const auto& [ledger, exp] : expected) {
            const auto& acct = own[ledger];
            Amount actual = ledger->balance(acct) - ledger->minted_to(acct);
            rep.connector_deltas[{c->config().address, ledger->id()}] = {actual, exp};
            if (actual != exp)
                fail(c->config().address + " on " + ledger->id() + ": balance moved " + std::to_string(actual) +
                     ", records imply " + std::to_string(exp));
        }
    }
    return rep;
}

}  // namespace spon::payment
