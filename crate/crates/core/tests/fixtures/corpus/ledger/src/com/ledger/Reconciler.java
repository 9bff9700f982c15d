package com.ledger;

public class Reconciler {
    private final List<String> reports = new ArrayList<>();

    public void reconcileMismatch(String match) {
        if (match == null) {
            return;
        }
        reports.add(match);
    }

    public int reportCount() {
        return reports.size();
    }

    public List<String> reconciles() {
        List<String> out = new ArrayList<>(reports);
        Collections.sort(out);
        return out;
    }
}
