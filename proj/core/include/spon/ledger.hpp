#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "spon/ilp.hpp"

namespace spon::payment {

using HoldId = std::uint64_t;

enum class HoldStatus { Active, Executed, Voided };

struct Hold {
    HoldId id = 0;
    std::string payer;
    std::string payee;
    Amount amount = 0;
    double expiry_ms = 0.0;
    HoldStatus status = HoldStatus::Active;
    std::uint64_t payment_id = 0;
    std::uint32_t seq = 0;
};

class LedgerError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class InsufficientFunds : public LedgerError {
  public:
    using LedgerError::LedgerError;
};

/// Integer-unit ledger with two-phase holds. balances + active holds is
/// constant except for mint().
class Ledger {
  public:
    Ledger(std::string id, std::string currency);

    const std::string& id() const { return id_; }
    const std::string& currency() const { return currency_; }

    void open(const std::string& account);
    void mint(const std::string& account, Amount amount);
    Amount balance(const std::string& account) const;
    Amount minted_to(const std::string& account) const;
    bool has_account(const std::string& account) const { return balances_.count(account) > 0; }

    /// Moves `amount` from payer's balance into a hold. Throws InsufficientFunds.
    HoldId hold(const std::string& payer, const std::string& payee, Amount amount, double expiry_ms,
                std::uint64_t payment_id = 0, std::uint32_t seq = 0);
    /// Credits the payee if the hold is active and unexpired at `now`. Repeat
    /// calls on an executed hold return true without moving value again; a
    /// voided or expired hold returns false (an expired one is voided).
    bool execute(HoldId id, double now_ms);
    /// Returns held value to the payer. No-op unless active.
    void void_hold(HoldId id);
    /// Voids every active hold with expiry <= now. Returns how many.
    std::size_t expire(double now_ms);

    const Hold& hold_info(HoldId id) const;
    const std::map<HoldId, Hold>& holds() const { return holds_; }
    std::size_t active_holds() const;
    Amount held() const { return held_; }
    Amount total() const;
    Amount minted() const { return minted_; }
    const std::map<std::string, Amount>& balances() const { return balances_; }

  private:
    Hold& get(HoldId id);

    std::string id_;
    std::string currency_;
    std::map<std::string, Amount> balances_;
    std::map<std::string, Amount> minted_to_;
    std::map<HoldId, Hold> holds_;
    HoldId next_hold_ = 1;
    Amount held_ = 0;
    Amount minted_ = 0;
};

}  // namespace spon::payment
