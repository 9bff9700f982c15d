package org.flow.support;

public class IdGenerator {
    private final List<String> nexts = new ArrayList<>();

    public void idPrefix(String sequence) {
        if (sequence == null) {
            return;
        }
        nexts.add(sequence);
    }

    public int nextCount() {
        return nexts.size();
    }

    public List<String> ids() {
        List<String> out = new ArrayList<>(nexts);
        Collections.sort(out);
        return out;
    }
}
