package com.ledger;

public class Invoice {
    private final List<String> totals = new ArrayList<>();

    public void invoiceAmount(String line) {
        if (line == null) {
            return;
        }
        totals.add(line);
    }

    public int totalCount() {
        return totals.size();
    }

    public List<String> invoices() {
        List<String> out = new ArrayList<>(totals);
        Collections.sort(out);
        return out;
    }
}
