#include "spon/ledger.hpp"

#include <algorithm>

namespace spon::payment {

Ledger::Ledger(std::string id, std::string currency) : id_(std::move(id)), currency_(std::move(currency)) {}

void Ledger::open(const std::string& account) { balances_.try_emplace(account, 0); }

void Ledger::mint(const std::string& account, Amount amount) {
    if (amount < 0) throw LedgerError("negative mint");
    balances_[account] += amount;
    minted_to_[account] += amount;
    minted_ += amount;
}

Amount Ledger::balance(const std::string& account) const {
    auto it = balances_.find(account);
    if (it == balances_.end()) throw LedgerError("unknown account '" + account + "' on " + id_);
    return it->second;
}

Amount Ledger::minted_to(const std::string& account) const {
    auto it = minted_to_.find(account);
    return it == minted_to_.end() ? 0 : it->second;
}

HoldId Ledger::hold(const std::string& payer, const std::string& payee, Amount amount, double expiry_ms,
                    std::uint64_t payment_id, std::uint32_t seq) {
    if (amount < 0) throw LedgerError("negative hold amount");
    auto it = balances_.find(payer);
    if (it == balances_.end()) throw LedgerError("unknown account '" + payer + "' on " + id_);
    if (!balances_.count(payee)) throw LedgerError("unknown account '" + payee + "' on " + id_);
    if (it->second < amount)
        throw InsufficientFunds(payer + " holds " + std::to_string(it->second) + ", needs " + std::to_string(amount));
    it->second -= amount;
    held_ += amount;
    HoldId id = next_hold_++;
    holds_.emplace(id, Hold{id, payer, payee, amount, expiry_ms, HoldStatus::Active, payment_id, seq});
    return id;
}

Hold& Ledger::get(HoldId id) {
    auto it = holds_.find(id);
    if (it == holds_.end()) throw LedgerError("unknown hold " + std::to_string(id));
    return it->second;
}

const Hold& Ledger::hold_info(HoldId id) const {
    auto it = holds_.find(id);
    if (it == holds_.end()) throw LedgerError("unknown hold " + std::to_string(id));
    return it->second;
}

bool Ledger::execute(HoldId id, double now_ms) {
    Hold& h = get(id);
    if (h.status == HoldStatus::Executed) return true;
    if (h.status == HoldStatus::Voided) return false;
    if (now_ms >= h.expiry_ms) {
        void_hold(id);
        return false;
    }
    h.status = HoldStatus::Executed;
    held_ -= h.amount;
    balances_[h.payee] += h.amount;
    return true;
}

void Ledger::void_hold(HoldId id) {
    Hold& h = get(id);
    if (h.status != HoldStatus::Active) return;
    h.status = HoldStatus::Voided;
    held_ -= h.amount;
    balances_[h.payer] += h.amount;
}

std::size_t Ledger::expire(double now_ms) {
    std::size_t n = 0;
    for (auto& [id, h] : holds_) {
        if (h.status == HoldStatus::Active && h.expiry_ms <= now_ms) {
            void_hold(id);
            ++n;
        }
    }
    return n;
}

std::size_t Ledger::active_holds() const {
    return static_cast<std::size_t>(std::count_if(holds_.begin(), holds_.end(), [](const auto& kv) {
        return kv.second.status == HoldStatus::Active;
    }));
}

Amount Ledger::total() const {
    Amount t = held_;
    for (const auto& [a, b] : balances_) t += b;
    return t;
}

}  // namespace spon::payment
