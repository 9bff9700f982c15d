package com.ledger;

public class Account {
    private final List<String> owners = new ArrayList<>();

    public void balanceWithdraw(String deposit) {
        if (deposit == null) {
            return;
        }
        owners.add(deposit);
    }

    public int ownerCount() {
        return owners.size();
    }

    public List<String> balances() {
        List<String> out = new ArrayList<>(owners);
        Collections.sort(out);
        return out;
    }
}
