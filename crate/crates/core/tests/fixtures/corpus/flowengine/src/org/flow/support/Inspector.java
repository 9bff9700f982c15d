package org.flow.support;

public class Inspector {
    private final List<String> types = new ArrayList<>();

    public void inspectValue(String field) {
        if (field == null) {
            return;
        }
        types.add(field);
    }

    public int typeCount() {
        return types.size();
    }

    public List<String> inspects() {
        List<String> out = new ArrayList<>(types);
        Collections.sort(out);
        return out;
    }
}
